//! Grid-based Hausdorff distance between a support and a ball union.
//!
//! Both directed sup-terms are taken over grid discretizations; the inner
//! inf-distances are exact (analytic distance to the support, closed-form
//! distance to a ball union). The estimate is therefore accurate to within one
//! grid diagonal, which is reported alongside the value.

use serde::Serialize;

use crate::error::{Error, Result};

use super::{axis_grid, cartesian, support_grid, BallUnion, SupportSpec};

#[derive(Debug, Clone, Serialize)]
pub struct HausdorffEstimate {
    /// `max(sup_{x in S} d(x, U), sup_{u in U} d(u, S))` over the grids.
    pub value: f64,
    /// Directed term from the support into the union.
    pub support_to_union: f64,
    /// Directed term from the union into the support.
    pub union_to_support: f64,
    /// One grid diagonal: the discretization tolerance of `value`.
    pub grid_tolerance: f64,
}

/// Estimate the Hausdorff distance between `support` and `union`.
///
/// `grid_step` must be positive and no coarser than a tenth of the smallest
/// ball radius, otherwise the discretization could miss entire balls.
pub fn hausdorff_distance(
    support: &SupportSpec,
    union: &BallUnion,
    grid_step: f64,
) -> Result<HausdorffEstimate> {
    support.validate()?;
    if !(grid_step > 0.0) {
        return Err(Error::invalid("grid step must be positive"));
    }
    let min_radius = union.min_radius();
    if grid_step > min_radius / 10.0 {
        return Err(Error::invalid(format!(
            "grid step {grid_step} too coarse for minimum ball radius {min_radius} \
             (need step <= radius / 10)"
        )));
    }
    if support.dim() != union.dim() {
        return Err(Error::invalid("support and union dimensions differ"));
    }

    // sup_{x in S} d(x, U): grid over the support, exact distance to the union.
    let mut s_to_u = 0.0f64;
    for x in support_grid(support, grid_step) {
        let d = union.distance(&x);
        if d > s_to_u {
            s_to_u = d;
        }
    }

    // sup_{u in U} d(u, S): grid over the union's bounding box, membership via
    // the exact union distance, exact distance to the support.
    let (lo, hi) = union.bbox();
    let axes: Vec<Vec<f64>> = lo
        .iter()
        .zip(&hi)
        .map(|(&l, &h)| axis_grid(l, h, grid_step))
        .collect();
    let mut u_to_s = 0.0f64;
    let mut point = vec![0.0; axes.len()];
    cartesian(&axes, 0, &mut point, &mut |p| {
        if union.contains(p) {
            let d = support.distance(p);
            if d > u_to_s {
                u_to_s = d;
            }
        }
    });

    let dim = support.dim() as f64;
    Ok(HausdorffEstimate {
        value: s_to_u.max(u_to_s),
        support_to_union: s_to_u,
        union_to_support: u_to_s,
        grid_tolerance: grid_step * dim.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;

    #[test]
    fn point_support_vs_single_ball_gives_radius() {
        // S is a single point; U is one ball of radius eps centered there.
        // The farthest ball point sits at distance eps.
        let support = SupportSpec::TwoClusters {
            centers: vec![[0.25, -0.5]],
            radii: vec![0.0],
        };
        let eps = 0.3;
        let union = BallUnion::uniform(vec![vec![0.25, -0.5]], eps).unwrap();
        let est = hausdorff_distance(&support, &union, eps / 20.0).unwrap();
        assert!(
            (est.value - eps).abs() <= est.grid_tolerance,
            "value {} vs eps {eps}",
            est.value
        );
        assert!(est.support_to_union.abs() < 1e-12);
    }

    #[test]
    fn identical_sets_have_zero_distance() {
        let support = SupportSpec::Disk { radius: 0.7 };
        let union = BallUnion::uniform(vec![vec![0.0, 0.0]], 0.7).unwrap();
        let est = hausdorff_distance(&support, &union, 0.02).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn distinct_sets_have_positive_distance() {
        let support = SupportSpec::Disk { radius: 0.7 };
        let union = BallUnion::uniform(vec![vec![0.0, 0.0]], 0.9).unwrap();
        let est = hausdorff_distance(&support, &union, 0.02).unwrap();
        assert!((est.value - 0.2).abs() <= est.grid_tolerance);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let support = SupportSpec::unit_square();
        let union = BallUnion::uniform(vec![vec![0.5, 0.5]], 0.1).unwrap();
        assert!(hausdorff_distance(&support, &union, 0.5).is_err());
    }

    #[test]
    fn matches_dense_rejection_sampling_oracle() {
        // Unit square vs three fixed balls, cross-checked against a random
        // point cloud estimate of both directed terms.
        let support = SupportSpec::unit_square();
        let centers = vec![vec![0.2, 0.3], vec![0.7, 0.6], vec![0.4, 0.9]];
        let eps = 0.3;
        let union = BallUnion::uniform(centers, eps).unwrap();
        let step = 0.01;
        let est = hausdorff_distance(&support, &union, step).unwrap();

        let mut rng = stream_rng(77, 0);
        let samples = 1_000_000;
        let mut s_to_u = 0.0f64;
        let mut u_to_s = 0.0f64;
        let (lo, hi) = union.bbox();
        for _ in 0..samples {
            let xs = [rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)];
            s_to_u = s_to_u.max(union.distance(&xs));
            let xu = [
                rng.gen_range(lo[0]..=hi[0]),
                rng.gen_range(lo[1]..=hi[1]),
            ];
            if union.contains(&xu) {
                u_to_s = u_to_s.max(support.distance(&xu));
            }
        }
        let oracle = s_to_u.max(u_to_s);
        assert!(
            (est.value - oracle).abs() <= est.grid_tolerance,
            "grid {} vs sampled {oracle}",
            est.value
        );
    }

    #[test]
    fn centers_inside_support_bound_the_union_side_by_eps() {
        // Proof-step check: when all centers lie in S, no union point is more
        // than eps away from S.
        let support = SupportSpec::unit_square();
        let mut rng = stream_rng(78, 0);
        for trial in 0..5 {
            let eps = 0.15 + 0.05 * trial as f64;
            let centers: Vec<Vec<f64>> = (0..30).map(|_| support.sample(&mut rng)).collect();
            let union = BallUnion::uniform(centers, eps).unwrap();
            let est = hausdorff_distance(&support, &union, eps / 12.0).unwrap();
            assert!(
                est.union_to_support <= eps + est.grid_tolerance,
                "union side {} exceeded eps {eps}",
                est.union_to_support
            );
        }
    }
}
