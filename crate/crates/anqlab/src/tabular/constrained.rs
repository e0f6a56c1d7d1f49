//! Brute-force neighborhood-constrained Bellman target.
//!
//! Enumerates `max Q(s, a)` over the union of per-dataset-action neighborhoods
//! on a dense grid. This is the oracle the trained auxiliary policy and state
//! value function are compared against; it must stay free of any learner code.

use crate::error::{Error, Result};

/// Grid maximum of `q` over the union of neighborhoods
/// `{ clip_box(a_i + delta) : ||delta||_2 <= radius_i }` for 1-D or 2-D
/// actions in the box `[-action_bound, action_bound]^d`.
///
/// `grid_resolution` is the number of grid points per dimension within each
/// neighborhood. Returns the maximum value and its argmax action.
pub fn brute_force_constrained_target(
    q: &dyn Fn(&[f64]) -> f64,
    dataset_actions: &[Vec<f64>],
    radii: &[f64],
    action_bound: f64,
    grid_resolution: usize,
) -> Result<(f64, Vec<f64>)> {
    if dataset_actions.is_empty() {
        return Err(Error::invalid("no dataset actions to search around"));
    }
    if dataset_actions.len() != radii.len() {
        return Err(Error::invalid("one radius per dataset action required"));
    }
    let dim = dataset_actions[0].len();
    if dim == 0 || dim > 2 {
        return Err(Error::invalid(
            "brute-force target supports 1-D or 2-D actions only",
        ));
    }
    if dataset_actions.iter().any(|a| a.len() != dim) {
        return Err(Error::invalid("dataset actions have mixed dimensions"));
    }
    if radii.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
        return Err(Error::invalid("radii must be finite and >= 0"));
    }
    if grid_resolution < 2 {
        return Err(Error::invalid("grid resolution must be >= 2"));
    }

    let clip = |v: f64| v.clamp(-action_bound, action_bound);
    let mut best = f64::NEG_INFINITY;
    let mut best_action = dataset_actions[0].clone();

    let mut consider = |action: Vec<f64>| {
        let val = q(&action);
        if val > best {
            best = val;
            best_action = action;
        }
    };

    for (anchor, &radius) in dataset_actions.iter().zip(radii) {
        if radius == 0.0 {
            consider(anchor.iter().map(|&v| clip(v)).collect());
            continue;
        }
        match dim {
            1 => {
                for i in 0..grid_resolution {
                    let t = i as f64 / (grid_resolution - 1) as f64;
                    let delta = -radius + 2.0 * radius * t;
                    consider(vec![clip(anchor[0] + delta)]);
                }
            }
            2 => {
                for i in 0..grid_resolution {
                    let ti = i as f64 / (grid_resolution - 1) as f64;
                    let dx = -radius + 2.0 * radius * ti;
                    for j in 0..grid_resolution {
                        let tj = j as f64 / (grid_resolution - 1) as f64;
                        let dy = -radius + 2.0 * radius * tj;
                        if dx * dx + dy * dy > radius * radius {
                            continue;
                        }
                        consider(vec![clip(anchor[0] + dx), clip(anchor[1] + dy)]);
                    }
                }
            }
            _ => unreachable!(),
        }
    }
    Ok((best, best_action))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parabola(center: f64) -> impl Fn(&[f64]) -> f64 {
        move |a: &[f64]| -(a[0] - center) * (a[0] - center)
    }

    #[test]
    fn empty_dataset_is_an_input_error() {
        let q = parabola(0.3);
        let err = brute_force_constrained_target(&q, &[], &[], 1.0, 100);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn radius_covers_the_optimum() {
        // Q(a) = -(a - 0.3)^2, anchor 0, radius 0.5: max 0 at a = 0.3.
        let q = parabola(0.3);
        let (val, arg) =
            brute_force_constrained_target(&q, &[vec![0.0]], &[0.5], 1.0, 2001).unwrap();
        assert!(val.abs() < 1e-6);
        assert!((arg[0] - 0.3).abs() < 1e-3);
    }

    #[test]
    fn small_radius_stops_at_the_boundary() {
        // Radius 0.2: best reachable point is a = 0.2, value -0.01.
        let q = parabola(0.3);
        let (val, arg) =
            brute_force_constrained_target(&q, &[vec![0.0]], &[0.2], 1.0, 2001).unwrap();
        assert!((val + 0.01).abs() < 1e-6);
        assert!((arg[0] - 0.2).abs() < 1e-3);
    }

    #[test]
    fn union_takes_the_better_neighborhood() {
        // Multimodal Q with peaks near each anchor; the union max equals the
        // larger of the two per-neighborhood maxima, cross-checked by halving
        // the grid resolution.
        let q = |a: &[f64]| {
            let x = a[0];
            2.0 * (-(x + 0.9) * (x + 0.9) / 0.02).exp() + 3.0 * (-(x - 1.2) * (x - 1.2) / 0.05).exp()
        };
        let anchors = [vec![-1.0], vec![1.0]];
        let radii = [0.1, 0.5];
        let (joint, _) =
            brute_force_constrained_target(&q, &anchors, &radii, 2.0, 4000).unwrap();
        let (left, _) =
            brute_force_constrained_target(&q, &anchors[..1], &radii[..1], 2.0, 4000).unwrap();
        let (right, _) =
            brute_force_constrained_target(&q, &anchors[1..], &radii[1..], 2.0, 4000).unwrap();
        assert!((joint - left.max(right)).abs() < 1e-12);
        let (coarse, _) =
            brute_force_constrained_target(&q, &anchors, &radii, 2.0, 2000).unwrap();
        let grid_step = 2.0 * 0.5 / 1999.0;
        assert!((joint - coarse).abs() <= grid_step * 4.0);
    }

    #[test]
    fn monotone_in_radius() {
        let q = |a: &[f64]| (3.0 * a[0]).sin() + 0.5 * (7.0 * a[1]).cos();
        let anchors = [vec![0.1, -0.2], vec![-0.5, 0.4]];
        let mut prev = f64::NEG_INFINITY;
        for r in [0.05, 0.1, 0.2, 0.4, 0.8] {
            let (val, _) =
                brute_force_constrained_target(&q, &anchors, &[r, r], 1.0, 101).unwrap();
            assert!(
                val >= prev - 1e-9,
                "radius {r} decreased the max: {val} < {prev}"
            );
            prev = val;
        }
    }

    #[test]
    fn clipping_keeps_candidates_in_the_box() {
        let q = |a: &[f64]| a[0]; // maximized at the box edge
        let (val, arg) =
            brute_force_constrained_target(&q, &[vec![0.9]], &[0.5], 1.0, 501).unwrap();
        assert!((val - 1.0).abs() < 1e-12);
        assert!((arg[0] - 1.0).abs() < 1e-12);
    }
}
