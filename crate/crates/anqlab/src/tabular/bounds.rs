//! Numeric verification of the density-constraint performance bound and the
//! neighborhood-to-sample distribution-shift bound on exact instances.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

use super::solve::{occupancy_from_kernel, policy_return};
use super::{TabularMdp, TabularPolicy};

/// Total variation between two distributions, `1/2 * ||p - q||_1`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

fn kl_divergence(p: &[f64], q: &[f64]) -> Option<f64> {
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return None; // support mismatch, divergence undefined
            }
            kl += pi * (pi / qi).ln();
        }
    }
    Some(kl.max(0.0))
}

/// One KL-based route through the performance bound.
#[derive(Debug, Clone, Serialize)]
pub struct KlRoute {
    /// `max_s KL[s]` across states.
    pub max_kl: f64,
    /// Epsilon recovered from the condition `KL <= 2 eps`.
    pub eps: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Report for one performance-bound instance. The TV route always applies;
/// each KL route is present only when the supports permit it.
#[derive(Debug, Clone, Serialize)]
pub struct PerformanceBoundReport {
    pub eta_pi: f64,
    pub eta_beta: f64,
    /// `(max_s TV(pi, pi_beta)[s])^2`, the tightest eps satisfying the TV condition.
    pub eps_tv: f64,
    pub rhs_tv: f64,
    pub slack_tv: f64,
    pub holds: bool,
    pub kl_pi_beta: Option<KlRoute>,
    pub kl_beta_pi: Option<KlRoute>,
    pub note: Option<String>,
}

/// Evaluate `eta(pi) <= eta(pi_beta) + 2 R_max / (1-gamma)^2 * sqrt(eps)` with
/// `eps` recovered from each of the admissible divergence conditions.
pub fn check_performance_bound(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    pi_beta: &TabularPolicy,
) -> Result<PerformanceBoundReport> {
    let eta_pi = policy_return(mdp, pi)?;
    let eta_beta = policy_return(mdp, pi_beta)?;
    let coeff = 2.0 * mdp.r_max() / (1.0 - mdp.gamma).powi(2);

    let mut tv_max = 0.0f64;
    let mut kl_pb_max: Option<f64> = Some(0.0);
    let mut kl_bp_max: Option<f64> = Some(0.0);
    for s in 0..mdp.n_states {
        let p = pi.row(s);
        let b = pi_beta.row(s);
        tv_max = tv_max.max(total_variation(p, b));
        kl_pb_max = match (kl_pb_max, kl_divergence(p, b)) {
            (Some(acc), Some(kl)) => Some(acc.max(kl)),
            _ => None,
        };
        kl_bp_max = match (kl_bp_max, kl_divergence(b, p)) {
            (Some(acc), Some(kl)) => Some(acc.max(kl)),
            _ => None,
        };
    }

    let eps_tv = tv_max * tv_max;
    let rhs_tv = eta_beta + coeff * eps_tv.sqrt();
    let holds = eta_pi <= rhs_tv + 1e-9;

    let kl_route = |max_kl: Option<f64>| -> Option<KlRoute> {
        max_kl.map(|kl| {
            let eps = kl / 2.0;
            let rhs = eta_beta + coeff * eps.sqrt();
            KlRoute {
                max_kl: kl,
                eps,
                rhs,
                holds: eta_pi <= rhs + 1e-9,
            }
        })
    };
    let kl_pi_beta = kl_route(kl_pb_max);
    let kl_beta_pi = kl_route(kl_bp_max);
    let note = if kl_pi_beta.is_none() || kl_beta_pi.is_none() {
        Some("KL route skipped: policy supports mismatch".to_string())
    } else {
        None
    };

    Ok(PerformanceBoundReport {
        eta_pi,
        eta_beta,
        eps_tv,
        rhs_tv,
        slack_tv: rhs_tv - eta_pi,
        holds,
        kl_pi_beta,
        kl_beta_pi,
        note,
    })
}

/// Report for one distribution-shift instance.
#[derive(Debug, Clone, Serialize)]
pub struct ShiftReport {
    pub d_tv: f64,
    pub bound: f64,
    pub slack: f64,
    pub holds: bool,
    pub k_p: f64,
    pub epsilon: f64,
}

/// A sampled instance for the distribution-shift check: a deterministic
/// continuous-action policy plus the per-state dataset actions it stays close
/// to. States with an empty action list are off-dataset.
#[derive(Debug, Clone)]
pub struct ShiftInstance {
    pub pi1: Vec<f64>,
    pub dataset_actions: Vec<Vec<f64>>,
}

/// Check `D_TV(d^{pi1}, d^{pi2}) <= gamma K_P eps / (2 (1-gamma))` where `pi2`
/// snaps every on-dataset state to the nearest dataset action (ties toward the
/// smaller index) and copies `pi1` elsewhere. Requires a Lipschitz-constructed
/// MDP; both occupancies are solved exactly.
pub fn check_distribution_shift(
    mdp: &TabularMdp,
    pi1: &[f64],
    dataset_actions: &[Vec<f64>],
    epsilon: f64,
) -> Result<ShiftReport> {
    let lip = mdp
        .lipschitz()
        .ok_or_else(|| Error::invalid("distribution-shift check needs a Lipschitz MDP"))?;
    if pi1.len() != mdp.n_states || dataset_actions.len() != mdp.n_states {
        return Err(Error::invalid("policy / dataset size mismatch"));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::invalid("epsilon must be >= 0"));
    }

    // pi2: nearest dataset action per on-dataset state.
    let mut pi2 = vec![0.0; mdp.n_states];
    for s in 0..mdp.n_states {
        let a1 = pi1[s];
        if dataset_actions[s].is_empty() {
            pi2[s] = a1;
            continue;
        }
        let mut best = dataset_actions[s][0];
        let mut best_dist = (a1 - best).abs();
        for &cand in &dataset_actions[s][1..] {
            let d = (a1 - cand).abs();
            if d < best_dist {
                best_dist = d;
                best = cand;
            }
        }
        if best_dist > epsilon + 1e-12 {
            return Err(Error::invalid(format!(
                "pi1({s}) is {best_dist:.6} away from the dataset, beyond epsilon {epsilon}"
            )));
        }
        pi2[s] = best;
    }

    let kernel_for = |pi: &[f64]| -> Result<Vec<f64>> {
        let mut k = vec![0.0; mdp.n_states * mdp.n_states];
        for s in 0..mdp.n_states {
            let row = mdp.interpolated_row(s, pi[s])?;
            k[s * mdp.n_states..(s + 1) * mdp.n_states].copy_from_slice(&row);
        }
        Ok(k)
    };
    let d1 = occupancy_from_kernel(&kernel_for(pi1)?, &mdp.d0, mdp.gamma)?;
    let d2 = occupancy_from_kernel(&kernel_for(&pi2)?, &mdp.d0, mdp.gamma)?;

    let d_tv = total_variation(&d1, &d2);
    let bound = mdp.gamma * lip.k_p * epsilon / (2.0 * (1.0 - mdp.gamma));
    Ok(ShiftReport {
        d_tv,
        bound,
        slack: bound - d_tv,
        holds: d_tv <= bound + 1e-9,
        k_p: lip.k_p,
        epsilon,
    })
}

/// Random dense MDP with Dirichlet(1) rows and rewards in `[0, 1]`.
pub fn random_mdp<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> TabularMdp {
    let mut transition = vec![0.0; n_states * n_actions * n_states];
    for row in transition.chunks_mut(n_states) {
        random_simplex(row, rng);
    }
    let reward: Vec<f64> = (0..n_states * n_actions)
        .map(|_| rng.gen_range(0.0..1.0))
        .collect();
    let gamma = rng.gen_range(0.5..0.97);
    let mut d0 = vec![0.0; n_states];
    random_simplex(&mut d0, rng);
    TabularMdp::new(n_states, n_actions, transition, reward, gamma, d0)
        .expect("random construction is always valid")
}

/// Random policy; with probability one half it is deterministic (exercising
/// the support-mismatch path of the KL routes), otherwise softmax.
pub fn random_policy<R: Rng + ?Sized>(mdp: &TabularMdp, rng: &mut R) -> TabularPolicy {
    if rng.gen_bool(0.5) {
        let actions: Vec<usize> = (0..mdp.n_states)
            .map(|_| rng.gen_range(0..mdp.n_actions))
            .collect();
        TabularPolicy::deterministic(mdp.n_states, mdp.n_actions, &actions).unwrap()
    } else {
        TabularPolicy::random(mdp.n_states, mdp.n_actions, rng.gen_range(0.5..4.0), rng)
    }
}

/// Random Lipschitz MDP on a 1-D action grid in `[0, 1]`.
pub fn random_lipschitz_mdp<R: Rng + ?Sized>(
    n_states: usize,
    grid_points: usize,
    rng: &mut R,
) -> TabularMdp {
    let mut p0 = vec![0.0; n_states * n_states];
    let mut p1 = vec![0.0; n_states * n_states];
    for row in p0.chunks_mut(n_states).chain(p1.chunks_mut(n_states)) {
        random_simplex(row, rng);
    }
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| i as f64 / (grid_points - 1).max(1) as f64)
        .collect();
    let reward: Vec<f64> = (0..n_states * grid_points)
        .map(|_| rng.gen_range(0.0..1.0))
        .collect();
    let gamma = rng.gen_range(0.5..0.95);
    let mut d0 = vec![0.0; n_states];
    random_simplex(&mut d0, rng);
    TabularMdp::new_lipschitz(n_states, p0, p1, grid, reward, gamma, d0)
        .expect("random Lipschitz construction is always valid")
}

/// Sample dataset actions plus a neighborhood-constrained `pi1` for the
/// distribution-shift check.
pub fn random_shift_instance<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    epsilon: f64,
    rng: &mut R,
) -> ShiftInstance {
    let mut dataset_actions = Vec::with_capacity(mdp.n_states);
    let mut pi1 = Vec::with_capacity(mdp.n_states);
    for _ in 0..mdp.n_states {
        let on_dataset = rng.gen_bool(0.8);
        if on_dataset {
            let count = rng.gen_range(1..=3usize);
            let mut actions: Vec<f64> = (0..count).map(|_| rng.gen_range(0.0..1.0)).collect();
            actions.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let anchor = actions[rng.gen_range(0..count)];
            let lo = (anchor - epsilon).max(0.0);
            let hi = (anchor + epsilon).min(1.0);
            pi1.push(rng.gen_range(lo..=hi));
            dataset_actions.push(actions);
        } else {
            pi1.push(rng.gen_range(0.0..1.0));
            dataset_actions.push(Vec::new());
        }
    }
    ShiftInstance {
        pi1,
        dataset_actions,
    }
}

fn random_simplex<R: Rng + ?Sized>(row: &mut [f64], rng: &mut R) {
    let mut sum = 0.0;
    for v in row.iter_mut() {
        // Exponential(1) draws normalized to the simplex = Dirichlet(1, ..., 1)
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        *v = -u.ln();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
    // Re-normalize exactly enough for the 1e-12 stochasticity tolerance.
    let s: f64 = row.iter().sum();
    for v in row.iter_mut() {
        *v /= s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn identical_policies_give_zero_eps_and_nonnegative_slack() {
        let mut rng = stream_rng(7, 0);
        let mdp = random_mdp(5, 3, &mut rng);
        let pi = TabularPolicy::random(5, 3, 1.0, &mut rng);
        let report = check_performance_bound(&mdp, &pi, &pi).unwrap();
        assert!(report.eps_tv.abs() < 1e-20);
        assert!(report.holds);
        assert!(report.slack_tv >= -1e-12);
        assert!((report.eta_pi - report.eta_beta).abs() < 1e-10);
    }

    #[test]
    fn disjoint_deterministic_policies_dominate_trivial_return_bound() {
        // TV = 1 between fully disjoint deterministic policies; the bound's
        // rhs then exceeds the best achievable return R_max / (1 - gamma).
        let mut rng = stream_rng(8, 0);
        let mdp = random_mdp(4, 2, &mut rng);
        let pi = TabularPolicy::deterministic(4, 2, &[0, 0, 0, 0]).unwrap();
        let beta = TabularPolicy::deterministic(4, 2, &[1, 1, 1, 1]).unwrap();
        let report = check_performance_bound(&mdp, &pi, &beta).unwrap();
        assert!((report.eps_tv - 1.0).abs() < 1e-12);
        let trivial = mdp.r_max() / (1.0 - mdp.gamma);
        assert!(report.rhs_tv >= report.eta_beta + 2.0 * trivial / (1.0 - mdp.gamma) - 1e-9);
        assert!(report.rhs_tv >= trivial);
        assert!(report.holds);
        // Deterministic policies with different actions break both KL routes.
        assert!(report.kl_pi_beta.is_none());
        assert!(report.note.is_some());
    }

    #[test]
    fn bound_holds_on_random_instances() {
        let mut rng = stream_rng(9, 0);
        for _ in 0..200 {
            let mdp = random_mdp(rng.gen_range(2..7), rng.gen_range(2..5), &mut rng);
            let pi = random_policy(&mdp, &mut rng);
            let beta = random_policy(&mdp, &mut rng);
            let report = check_performance_bound(&mdp, &pi, &beta).unwrap();
            assert!(report.holds, "TV route violated: {report:?}");
            for route in [&report.kl_pi_beta, &report.kl_beta_pi].into_iter().flatten() {
                assert!(route.holds, "KL route violated: {report:?}");
            }
        }
    }

    #[test]
    fn shift_with_identical_policies_is_zero() {
        let mut rng = stream_rng(10, 0);
        let mdp = random_lipschitz_mdp(5, 6, &mut rng);
        let pi1 = vec![0.4; 5];
        let dataset: Vec<Vec<f64>> = vec![vec![0.4]; 5];
        let report = check_distribution_shift(&mdp, &pi1, &dataset, 0.0).unwrap();
        assert!(report.d_tv.abs() < 1e-12);
        assert!(report.holds);
    }

    #[test]
    fn shift_bound_holds_on_random_instances() {
        let mut rng = stream_rng(11, 0);
        for _ in 0..100 {
            let mdp = random_lipschitz_mdp(rng.gen_range(3..7), 5, &mut rng);
            let eps = [0.05, 0.1, 0.2][rng.gen_range(0..3)];
            let inst = random_shift_instance(&mdp, eps, &mut rng);
            let report =
                check_distribution_shift(&mdp, &inst.pi1, &inst.dataset_actions, eps).unwrap();
            assert!(report.holds, "shift bound violated: {report:?}");
        }
    }

    #[test]
    fn shift_requires_lipschitz_mdp() {
        let mut rng = stream_rng(12, 0);
        let mdp = random_mdp(3, 2, &mut rng);
        let err = check_distribution_shift(&mdp, &[0.0; 3], &[vec![], vec![], vec![]], 0.1);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn nearest_action_tie_breaks_toward_smaller_index() {
        let mut rng = stream_rng(13, 0);
        let mdp = random_lipschitz_mdp(2, 4, &mut rng);
        // pi1 exactly between two dataset actions (all values binary-exact, so
        // the distances tie bit-for-bit): the smaller-index action wins.
        let dataset = vec![vec![0.25, 0.75], vec![0.5]];
        let report = check_distribution_shift(&mdp, &[0.5, 0.5], &dataset, 0.25).unwrap();
        // Verified indirectly: recompute the occupancy gap with the expected
        // snap (0.25, not 0.75) and compare.
        let manual = {
            let k1: Vec<f64> = (0..2)
                .flat_map(|s| mdp.interpolated_row(s, [0.5, 0.5][s]).unwrap())
                .collect();
            let k2: Vec<f64> = (0..2)
                .flat_map(|s| mdp.interpolated_row(s, [0.25, 0.5][s]).unwrap())
                .collect();
            let d1 = occupancy_from_kernel(&k1, &mdp.d0, mdp.gamma).unwrap();
            let d2 = occupancy_from_kernel(&k2, &mdp.d0, mdp.gamma).unwrap();
            total_variation(&d1, &d2)
        };
        assert!((report.d_tv - manual).abs() < 1e-12);
        assert!(report.d_tv > 1e-6, "snap should change the occupancy");
    }
}
