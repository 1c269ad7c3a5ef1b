use serde::{Deserialize, Serialize};

use super::{proportion, run_trials, trial_instance, z_score, Cell, Estimate, EstimatorError, TrialPlan, BOUND_SIGMAS, Z_THRESHOLD};
use crate::engine::five_step_experiment;
use crate::rng::streams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiveStepReport {
    pub meta: super::CellMeta,
    pub trials: u64,
    pub master_seed: u64,
    pub jump1: Estimate,
    pub jump2: Estimate,
    pub tau1_x_sleeping: Estimate,
    pub ch_ge_2: Estimate,
    /// `p_j / 2d`.
    pub jump2_expected: f64,
    pub jump2_z: f64,
    /// `(1 / 2d)(1 - p_s p_j / 2d)`.
    pub ch_ge_2_lower: f64,
    /// Two-proportion z of `P(jump2 | jump1)` against `P(jump2 | not jump1)`.
    pub independence_z: f64,
    /// Runs breaking `jump1 => tau1_x_sleeping` or `jump1 or jump2 => Ch >= 2`.
    pub invariant_violations: u64,
    pub jump2_ok: bool,
    pub tau1_ok: bool,
    pub ch_ge_2_ok: bool,
    pub independence_ok: bool,
}

impl FiveStepReport {
    pub fn passed(&self) -> bool {
        self.invariant_violations == 0 && self.jump2_ok && self.tau1_ok && self.ch_ge_2_ok && self.independence_ok
    }
}

/// Runs the five-step experiment on `plan.trials` draws of `cell`, whose law
/// must fill the unit ball, and checks the step probabilities.
pub fn five_step_report(cell: &Cell, plan: &TrialPlan) -> Result<FiveStepReport, EstimatorError> {
    plan.check()?;
    let lattice = cell.lattice()?;
    let recs = run_trials(plan.trials, |t| {
        let (cfg, src) = trial_instance(cell, &lattice, plan.master_seed, streams::FIVE_STEP, t);
        let r = five_step_experiment(&cfg, &src)?;
        Ok([r.jump1, r.jump2, r.tau1_x_sleeping, r.ch_ge_2])
    })?;
    let n = plan.trials;
    let count = |i: usize| recs.iter().filter(|r| r[i]).count() as u64;
    let est = |i: usize| {
        let (value, std_error) = proportion(count(i), n);
        Estimate { value, std_error }
    };
    let (jump1, jump2, tau1, ch2) = (est(0), est(1), est(2), est(3));

    let d = cell.d() as f64;
    let (p_s, p_j) = (cell.params.p_sleep(), cell.params.p_jump());
    let jump2_expected = p_j / (2.0 * d);
    let jump2_z = z_score(jump2.value, jump2.std_error, jump2_expected, 0.0);
    let ch_ge_2_lower = (1.0 - p_s * p_j / (2.0 * d)) / (2.0 * d);

    let with_j1 = count(0);
    let independence_z = if with_j1 == 0 || with_j1 == n {
        0.0
    } else {
        let both = recs.iter().filter(|r| r[0] && r[1]).count() as u64;
        let (a, ase) = proportion(both, with_j1);
        let (b, bse) = proportion(count(1) - both, n - with_j1);
        z_score(a, ase, b, bse)
    };
    let invariant_violations = recs
        .iter()
        .filter(|r| (r[0] && !r[2]) || ((r[0] || r[1]) && !r[3]))
        .count() as u64;

    Ok(FiveStepReport {
        meta: cell.meta(),
        trials: n,
        master_seed: plan.master_seed,
        jump1,
        jump2,
        tau1_x_sleeping: tau1,
        ch_ge_2: ch2,
        jump2_expected,
        jump2_z,
        ch_ge_2_lower,
        independence_z,
        invariant_violations,
        jump2_ok: jump2_z.abs() <= BOUND_SIGMAS,
        tau1_ok: tau1.value >= p_s - BOUND_SIGMAS * tau1.std_error,
        ch_ge_2_ok: ch2.value >= ch_ge_2_lower - BOUND_SIGMAS * ch2.std_error,
        independence_ok: independence_z.abs() < Z_THRESHOLD,
    })
}
