//! Value iteration and exact occupancy / return computation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::{TabularMdp, TabularPolicy};

#[derive(Debug, Clone)]
pub struct ValueIterationOut {
    /// Optimal action values, `[s][a]`.
    pub q: Vec<f64>,
    /// Greedy policy w.r.t. `q` (ties toward the smaller action index).
    pub greedy: TabularPolicy,
    pub iterations: usize,
    /// Sup-norm of the final Bellman residual.
    pub residual: f64,
}

impl ValueIterationOut {
    pub fn q_at(&self, mdp: &TabularMdp, s: usize, a: usize) -> f64 {
        self.q[s * mdp.n_actions + a]
    }

    pub fn state_value(&self, mdp: &TabularMdp, s: usize) -> f64 {
        (0..mdp.n_actions)
            .map(|a| self.q[s * mdp.n_actions + a])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Iterate the Bellman optimality operator until the sup-norm residual of the
/// returned table is at most `tol`. Converges for any `gamma < 1`.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<ValueIterationOut> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance must be positive"));
    }
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let mut q = vec![0.0; ns * na];
    let mut next = vec![0.0; ns * na];
    let mut v = vec![0.0; ns];
    let mut iterations = 0usize;
    let mut residual;
    loop {
        for s in 0..ns {
            v[s] = (0..na)
                .map(|a| q[s * na + a])
                .fold(f64::NEG_INFINITY, f64::max);
        }
        residual = 0.0f64;
        for s in 0..ns {
            for a in 0..na {
                let mut target = mdp.r(s, a);
                let row = mdp.transition_row(s, a);
                for s2 in 0..ns {
                    target += mdp.gamma * row[s2] * v[s2];
                }
                residual = residual.max((target - q[s * na + a]).abs());
                next[s * na + a] = target;
            }
        }
        std::mem::swap(&mut q, &mut next);
        iterations += 1;
        // Returning T(q_prev) after ||T(q_prev) - q_prev|| <= tol guarantees
        // the returned table's own residual is at most gamma * tol.
        if residual <= tol {
            break;
        }
    }
    let greedy_actions: Vec<usize> = (0..ns)
        .map(|s| {
            let mut best = 0;
            for a in 1..na {
                if q[s * na + a] > q[s * na + best] {
                    best = a;
                }
            }
            best
        })
        .collect();
    let greedy = TabularPolicy::deterministic(ns, na, &greedy_actions)?;
    Ok(ValueIterationOut {
        q,
        greedy,
        iterations,
        residual,
    })
}

/// Discounted state occupancy of `pi`, solved exactly from the Bellman-flow
/// linear system `d = (1-gamma) d0 + gamma P_pi^T d`.
pub fn occupancy(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<Vec<f64>> {
    check_policy(mdp, pi)?;
    let ns = mdp.n_states;
    // Row-stochastic state-to-state kernel under pi.
    let mut p_pi = vec![0.0; ns * ns];
    for s in 0..ns {
        for a in 0..mdp.n_actions {
            let w = pi.prob(s, a);
            if w == 0.0 {
                continue;
            }
            let row = mdp.transition_row(s, a);
            for s2 in 0..ns {
                p_pi[s * ns + s2] += w * row[s2];
            }
        }
    }
    occupancy_from_kernel(&p_pi, &mdp.d0, mdp.gamma)
}

/// Occupancy solve for an explicit state-to-state kernel (used for the
/// continuous-action policies of the distribution-shift check).
pub(crate) fn occupancy_from_kernel(p_pi: &[f64], d0: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let ns = d0.len();
    // (I - gamma P_pi^T) d = (1 - gamma) d0
    let mut a = DMatrix::<f64>::identity(ns, ns);
    for s in 0..ns {
        for s2 in 0..ns {
            a[(s2, s)] -= gamma * p_pi[s * ns + s2];
        }
    }
    let b = DVector::from_iterator(ns, d0.iter().map(|v| (1.0 - gamma) * v));
    let lu = a.lu();
    let d = lu
        .solve(&b)
        .ok_or_else(|| Error::numeric("occupancy system is singular"))?;
    Ok(d.iter().copied().collect())
}

/// Exact discounted return of `pi`, via the occupancy identity
/// `eta = 1/(1-gamma) * sum_s d(s) sum_a pi(a|s) R(s,a)`.
pub fn policy_return(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<f64> {
    let d = occupancy(mdp, pi)?;
    let mut eta = 0.0;
    for s in 0..mdp.n_states {
        let mut r_pi = 0.0;
        for a in 0..mdp.n_actions {
            r_pi += pi.prob(s, a) * mdp.r(s, a);
        }
        eta += d[s] * r_pi;
    }
    Ok(eta / (1.0 - mdp.gamma))
}

/// Independent route to the same quantity: iterative policy evaluation of
/// `V^pi`, then `eta = E_{d0}[V]`.
pub fn policy_return_iterative(mdp: &TabularMdp, pi: &TabularPolicy, tol: f64) -> Result<f64> {
    check_policy(mdp, pi)?;
    let ns = mdp.n_states;
    let mut v = vec![0.0; ns];
    loop {
        let mut delta = 0.0f64;
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            let mut val = 0.0;
            for a in 0..mdp.n_actions {
                let w = pi.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                let mut backup = mdp.r(s, a);
                let row = mdp.transition_row(s, a);
                for s2 in 0..ns {
                    backup += mdp.gamma * row[s2] * v[s2];
                }
                val += w * backup;
            }
            delta = delta.max((val - v[s]).abs());
            next[s] = val;
        }
        v = next;
        if delta <= tol {
            break;
        }
    }
    Ok(mdp.d0.iter().zip(&v).map(|(p, val)| p * val).sum())
}

fn check_policy(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<()> {
    if pi.n_states != mdp.n_states || pi.n_actions != mdp.n_actions {
        return Err(Error::invalid("policy shape does not match the MDP"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::tabular::random_mdp;

    fn single_state(reward: f64, gamma: f64) -> TabularMdp {
        TabularMdp::new(1, 2, vec![1.0, 1.0], vec![reward, reward], gamma, vec![1.0]).unwrap()
    }

    #[test]
    fn zero_reward_gives_zero_q() {
        let mdp = single_state(0.0, 0.9);
        let out = value_iteration(&mdp, 1e-10).unwrap();
        assert!(out.q.iter().all(|q| q.abs() < 1e-9));
    }

    #[test]
    fn single_state_geometric_series() {
        let gamma = 0.9;
        let mdp = single_state(1.0, gamma);
        let out = value_iteration(&mdp, 1e-12).unwrap();
        let expect = 1.0 / (1.0 - gamma);
        for a in 0..2 {
            assert!((out.q_at(&mdp, 0, a) - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn value_iteration_matches_linear_solve_for_greedy_policy() {
        // Oracle: for the greedy policy pi*, Q*(s, pi*(s)) solves the linear
        // Bellman evaluation equations exactly.
        let mut rng = stream_rng(42, 0);
        for _ in 0..20 {
            let mdp = random_mdp(5, 3, &mut rng);
            let out = value_iteration(&mdp, 1e-13).unwrap();
            let eta_vi: f64 = (0..mdp.n_states)
                .map(|s| mdp.d0[s] * out.state_value(&mdp, s))
                .sum();
            let eta_lin = policy_return(&mdp, &out.greedy).unwrap();
            assert!(
                (eta_vi - eta_lin).abs() < 1e-6,
                "VI return {eta_vi} vs linear solve {eta_lin}"
            );
        }
    }

    #[test]
    fn constant_reward_return_is_geometric() {
        let mut probs = vec![0.0; 2];
        probs[0] = 1.0;
        probs[1] = 1.0;
        let mdp = TabularMdp::new(
            2,
            1,
            vec![0.5, 0.5, 0.5, 0.5],
            vec![0.3, 0.3],
            0.8,
            vec![0.5, 0.5],
        )
        .unwrap();
        let pi = TabularPolicy::deterministic(2, 1, &[0, 0]).unwrap();
        let eta = policy_return(&mdp, &pi).unwrap();
        assert!((eta - 0.3 / 0.2).abs() < 1e-10);
    }

    #[test]
    fn two_state_cycle_hand_computed_return() {
        // Rewards (1, 0) around a deterministic cycle from state 0:
        // eta = 1 + gamma^2 + gamma^4 + ... = 1 / (1 - gamma^2).
        let gamma = 0.5;
        let mdp = crate::tabular::tests::two_state_cycle(gamma);
        let pi = TabularPolicy::deterministic(2, 1, &[0, 0]).unwrap();
        let eta = policy_return(&mdp, &pi).unwrap();
        assert!((eta - 4.0 / 3.0).abs() < 1e-12);
        let eta_iter = policy_return_iterative(&mdp, &pi, 1e-14).unwrap();
        assert!((eta - eta_iter).abs() < 1e-9);
    }

    #[test]
    fn zero_reward_mdp_has_zero_return_for_any_policy() {
        let mut rng = stream_rng(43, 0);
        let base = random_mdp(4, 3, &mut rng);
        let transitions: Vec<f64> = (0..4 * 3)
            .flat_map(|sa| base.transition_row(sa / 3, sa % 3).to_vec())
            .collect();
        let mdp =
            TabularMdp::new(4, 3, transitions, vec![0.0; 12], base.gamma, base.d0.clone()).unwrap();
        let pi = TabularPolicy::random(4, 3, 2.0, &mut rng);
        assert!(policy_return(&mdp, &pi).unwrap().abs() < 1e-12);
    }

    #[test]
    fn occupancy_sums_to_one_and_satisfies_flow() {
        let mut rng = stream_rng(44, 0);
        for _ in 0..25 {
            let mdp = random_mdp(6, 3, &mut rng);
            let pi = TabularPolicy::random(6, 3, 1.5, &mut rng);
            let d = occupancy(&mdp, &pi).unwrap();
            let sum: f64 = d.iter().sum();
            assert!((sum - 1.0).abs() < 1e-10, "occupancy sums to {sum}");
            // Bellman-flow residual.
            for s in 0..mdp.n_states {
                let mut rhs = (1.0 - mdp.gamma) * mdp.d0[s];
                for s2 in 0..mdp.n_states {
                    for a in 0..mdp.n_actions {
                        rhs += mdp.gamma * mdp.p(s2, a, s) * pi.prob(s2, a) * d[s2];
                    }
                }
                assert!((d[s] - rhs).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn return_routes_agree_on_random_instances() {
        let mut rng = stream_rng(45, 0);
        for _ in 0..25 {
            let mdp = random_mdp(5, 4, &mut rng);
            let pi = TabularPolicy::random(5, 4, 1.0, &mut rng);
            let a = policy_return(&mdp, &pi).unwrap();
            let b = policy_return_iterative(&mdp, &pi, 1e-13).unwrap();
            assert!((a - b).abs() < 1e-8, "linear {a} vs iterative {b}");
        }
    }
}
