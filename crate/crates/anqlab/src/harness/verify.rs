//! Verification suites: exact tabular bound checks and Monte Carlo
//! support-coverage trials, with per-trial JSON records.

use serde::Serialize;

use crate::error::Result;
use crate::exec::par_map;
use crate::geometry::{
    coverage_trial, covering_number, required_n, CoverageReport, SupportSpec,
};
use crate::rng::{streams, stream_rng};
use crate::tabular::{
    check_distribution_shift, check_performance_bound, occupancy, policy_return,
    policy_return_iterative, random_lipschitz_mdp, random_mdp, random_policy,
    random_shift_instance, value_iteration, TabularPolicy,
};

use rand::Rng;

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub instance: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteSummary {
    pub trials: usize,
    pub violations: usize,
    pub min_slack: f64,
}

fn summarize(records: &[TrialRecord]) -> SuiteSummary {
    SuiteSummary {
        trials: records.len(),
        violations: records.iter().filter(|r| !r.holds).count(),
        min_slack: records
            .iter()
            .map(|r| r.slack)
            .fold(f64::INFINITY, f64::min),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    pub seed: u64,
    pub performance_bound: SuiteSummary,
    pub performance_trials: Vec<TrialRecord>,
    pub distribution_shift: SuiteSummary,
    pub shift_trials: Vec<TrialRecord>,
    pub solver_consistency: SuiteSummary,
    pub passed: bool,
}

/// Run the exact-MDP suites: `instances` performance-bound checks,
/// `instances / 2` distribution-shift checks, and a solver self-consistency
/// sweep. Trials are independent and parallel.
pub fn verify_theory(instances: usize, seed: u64) -> Result<TheoryReport> {
    let performance_trials = par_map((0..instances).collect::<Vec<_>>(), |i| {
        let mut rng = stream_rng(seed, streams::TRIAL_BASE + i as u64);
        let mdp = random_mdp(rng.gen_range(2..8), rng.gen_range(2..5), &mut rng);
        let pi = random_policy(&mdp, &mut rng);
        let beta = random_policy(&mdp, &mut rng);
        let report = check_performance_bound(&mdp, &pi, &beta).expect("valid instance");
        let mut holds = report.holds;
        for route in [&report.kl_pi_beta, &report.kl_beta_pi].into_iter().flatten() {
            holds &= route.holds;
        }
        TrialRecord {
            instance: i,
            lhs: report.eta_pi,
            rhs: report.rhs_tv,
            slack: report.slack_tv,
            holds,
        }
    });

    let shift_count = (instances / 2).max(1);
    let shift_trials = par_map((0..shift_count).collect::<Vec<_>>(), |i| {
        let mut rng = stream_rng(seed, streams::TRIAL_BASE + 100_000 + i as u64);
        let mdp = random_lipschitz_mdp(rng.gen_range(3..7), 5, &mut rng);
        let eps = [0.05, 0.1, 0.2][rng.gen_range(0..3)];
        let inst = random_shift_instance(&mdp, eps, &mut rng);
        let report = check_distribution_shift(&mdp, &inst.pi1, &inst.dataset_actions, eps)
            .expect("valid instance");
        TrialRecord {
            instance: i,
            lhs: report.d_tv,
            rhs: report.bound,
            slack: report.slack,
            holds: report.holds,
        }
    });

    // Solver self-consistency: value iteration against the linear-solve
    // return of its greedy policy, both return routes, and occupancy mass.
    let solver_count = 50usize;
    let solver_trials = par_map((0..solver_count).collect::<Vec<_>>(), |i| {
        let mut rng = stream_rng(seed, streams::TRIAL_BASE + 200_000 + i as u64);
        let mdp = random_mdp(rng.gen_range(2..7), rng.gen_range(2..4), &mut rng);
        let out = value_iteration(&mdp, 1e-12).expect("tolerance > 0");
        let eta_vi: f64 = (0..mdp.n_states)
            .map(|s| mdp.d0[s] * out.state_value(&mdp, s))
            .sum();
        let eta_lin = policy_return(&mdp, &out.greedy).expect("valid policy");
        let pi = TabularPolicy::random(mdp.n_states, mdp.n_actions, 1.5, &mut rng);
        let eta_a = policy_return(&mdp, &pi).expect("valid policy");
        let eta_b = policy_return_iterative(&mdp, &pi, 1e-13).expect("valid policy");
        let d = occupancy(&mdp, &pi).expect("valid policy");
        let mass: f64 = d.iter().sum();
        let err = (eta_vi - eta_lin)
            .abs()
            .max((eta_a - eta_b).abs())
            .max((mass - 1.0).abs());
        let tol = 1e-6;
        TrialRecord {
            instance: i,
            lhs: err,
            rhs: tol,
            slack: tol - err,
            holds: err <= tol,
        }
    });

    let performance_bound = summarize(&performance_trials);
    let distribution_shift = summarize(&shift_trials);
    let solver_consistency = summarize(&solver_trials);
    let passed = performance_bound.violations == 0
        && distribution_shift.violations == 0
        && solver_consistency.violations == 0;
    Ok(TheoryReport {
        seed,
        performance_bound,
        performance_trials,
        distribution_shift,
        shift_trials,
        solver_consistency,
        passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometryCase {
    pub epsilon: f64,
    pub covering_n: usize,
    pub required_samples: u64,
    pub coverage: CoverageReport,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometryReport {
    pub seed: u64,
    pub delta: f64,
    pub support: String,
    pub cases: Vec<GeometryCase>,
    pub passed: bool,
}

/// Monte Carlo support-approximation check on the unit square with its
/// analytic standardness constants: for each epsilon, derive the sample size
/// from the covering-number bound at the given delta, then measure the
/// empirical coverage frequency over `trials` draws. A case passes when the
/// frequency is at least `1 - delta` or its lower 95% Wilson bound is at
/// least `1 - delta - 0.05`.
pub fn verify_geometry(
    epsilons: &[f64],
    trials: u32,
    delta: f64,
    seed: u64,
) -> Result<GeometryReport> {
    let support = SupportSpec::unit_square();
    let mut cases = Vec::new();
    for &eps in epsilons {
        let covering_n = covering_number(&support, eps / 2.0)?;
        let n = required_n(covering_n, support.c0(), eps, support.dim(), delta)?;
        let coverage = coverage_trial(&support, eps, n, trials, eps / 12.0, seed)?;
        let target = 1.0 - delta;
        let passed = coverage.frequency >= target || coverage.ci_low >= target - 0.05;
        cases.push(GeometryCase {
            epsilon: eps,
            covering_n,
            required_samples: n,
            coverage,
            passed,
        });
    }
    let passed = cases.iter().all(|c| c.passed);
    Ok(GeometryReport {
        seed,
        delta,
        support: "unit_square".to_string(),
        cases,
        passed,
    })
}
