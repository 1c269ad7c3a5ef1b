use serde::{Deserialize, Serialize};

use super::{occupation_hits, proportion, Cell, EstimatorError, InitialLaw, TrialPlan, Z_THRESHOLD};
use crate::rng::{derive_seed, streams};
use crate::stacks::Params;
use crate::walks::{returns_asymptotic, ReturnsEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErSource {
    MonteCarlo,
    Asymptotic,
    /// Recurrent walk: `E[R] = ∞` and there is no upper bound.
    Divergent,
}

/// Both sides of the critical density bounds
/// `p_s + a (1 - a) <= ρ_c <= p_s + p_s p_j E[R]` with `a = p_s p_j / 2d`.
/// Also the CSV row schema, in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub d: usize,
    pub lambda: f64,
    pub p_s: f64,
    pub p_j: f64,
    pub lower: f64,
    pub upper: Option<f64>,
    pub upper_se: Option<f64>,
    pub e_r: Option<f64>,
    pub e_r_se: Option<f64>,
    pub e_r_source: ErSource,
}

/// Evaluates the bounds. `E[R]` comes from `returns` when given and finite,
/// from the `1 / 2d` surrogate when absent, and is divergent for `d <= 2`.
pub fn bounds_report(params: Params, returns: Option<&ReturnsEstimate>) -> BoundsReport {
    let d = params.dim();
    let (p_s, p_j) = (params.p_sleep(), params.p_jump());
    let a = p_s * p_j / (2.0 * d as f64);
    let lower = p_s + a * (1.0 - a);
    let (e_r, e_r_se, e_r_source) = match returns {
        _ if d <= 2 => (None, None, ErSource::Divergent),
        Some(r) if r.divergent => (None, None, ErSource::Divergent),
        Some(r) => (Some(r.mean), Some(r.std_error), ErSource::MonteCarlo),
        None => (Some(returns_asymptotic(d)), None, ErSource::Asymptotic),
    };
    BoundsReport {
        d,
        lambda: params.lambda(),
        p_s,
        p_j,
        lower,
        upper: e_r.map(|e| p_s + p_s * p_j * e),
        upper_se: e_r_se.map(|s| p_s * p_j * s),
        e_r,
        e_r_se,
        e_r_source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhocPoint {
    pub rho: f64,
    pub occupation: f64,
    pub std_error: f64,
    /// `(occupation - rho) / std_error`.
    pub z: f64,
    /// Occupation decisively below `rho`: the finite-volume supercritical
    /// indicator.
    pub below: bool,
}

/// Finite-volume pseudo-critical bracket. This is a proxy: the transition is
/// smooth at finite `n` and the bracket moves with `n` and with the trial
/// count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhocReport {
    pub d: usize,
    pub n: usize,
    pub lambda: f64,
    pub trials: u64,
    pub master_seed: u64,
    pub z_threshold: f64,
    pub points: Vec<RhocPoint>,
    /// Consecutive grid points `[a, b]` such that the indicator is off at `a`
    /// and on from `b` to the end of the grid.
    pub bracket: Option<[f64; 2]>,
}

/// Estimates the origin occupation under i.i.d. Poisson(ρ) for each ρ of
/// `rho_grid` and brackets where it starts to fall decisively below ρ.
pub fn rhoc_bracket(
    n: usize,
    params: Params,
    plan: &TrialPlan,
    rho_grid: &[f64],
) -> Result<RhocReport, EstimatorError> {
    plan.check()?;
    if rho_grid.is_empty() {
        return Err(EstimatorError::BadGrid("empty density grid".into()));
    }
    if rho_grid.windows(2).any(|w| w[1] <= w[0]) || rho_grid[0] < 0.0 {
        return Err(EstimatorError::BadGrid("densities must be >= 0 and strictly increasing".into()));
    }
    let mut points = Vec::with_capacity(rho_grid.len());
    for (i, &rho) in rho_grid.iter().enumerate() {
        let cell = Cell::new(n, params, InitialLaw::IidPoisson { rho })?;
        let master = derive_seed(plan.master_seed, streams::RHOC, i as u64);
        let sub = TrialPlan::new(plan.trials, master);
        let hits = occupation_hits(&cell, &sub, streams::OCCUPATION)?;
        let (occupation, std_error) = proportion(hits, plan.trials);
        let z = super::z_score(occupation, std_error, rho, 0.0);
        points.push(RhocPoint {
            rho,
            occupation,
            std_error,
            z,
            below: z < -Z_THRESHOLD,
        });
    }
    let bracket = points
        .iter()
        .rposition(|p| !p.below)
        .filter(|&i| i + 1 < points.len())
        .map(|i| [points[i].rho, points[i + 1].rho]);
    Ok(RhocReport {
        d: params.dim(),
        n,
        lambda: params.lambda(),
        trials: plan.trials,
        master_seed: plan.master_seed,
        z_threshold: Z_THRESHOLD,
        points,
        bracket,
    })
}
