//! Monte Carlo estimators and verification reports.
//!
//! Trials are independent: trial `t` of stream `s` draws its initial
//! configuration and its stacks from seeds derived from
//! `(master_seed, s, t)`. Trials run in parallel and are collected in trial
//! order before any floating point aggregation, so every report is
//! bit-for-bit reproducible for a fixed master seed and trial count,
//! whatever the number of worker threads.

mod bounds;
mod five_step;
mod law;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    self, strong_stabilize_iterative, Configuration, EngineError, SiteState, StabilizationMode,
};
use crate::lattice::{make_box, LatticeBox, LatticeError};
use crate::rng::{derive_seed, streams, SplitMix64};
use crate::stacks::{Params, StackSource};
use crate::walks::{ReturnsEstimate, WalksError};

pub use bounds::{bounds_report, rhoc_bracket, BoundsReport, ErSource, RhocPoint, RhocReport};
pub use five_step::{five_step_report, FiveStepReport};
pub use law::InitialLaw;

/// Pass/fail threshold on |z| for agreement checks.
pub const Z_THRESHOLD: f64 = 4.0;
/// Standard errors of slack allowed by one-sided bound checks.
pub const BOUND_SIGMAS: f64 = 3.0;
const Z95: f64 = 1.96;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Params(#[from] crate::stacks::ParamsError),
    #[error(transparent)]
    Walks(#[from] WalksError),
    #[error("invalid initial law: {0}")]
    BadLaw(String),
    #[error("at least one trial is required")]
    NoTrials,
    #[error("the returns estimate is divergent (recurrent walk or censored); no finite bound")]
    DivergentReturns,
    #[error("returns estimate is for d = {got}, cell has d = {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("density {rho} is not below the lower bound {lower:.6}")]
    NotSubcritical { rho: f64, lower: f64 },
}

/// One experiment cell: box radius, parameters and initial law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub params: Params,
    pub law: InitialLaw,
}

impl Cell {
    pub fn new(n: usize, params: Params, law: InitialLaw) -> Result<Self, EstimatorError> {
        let law = law.for_dim(params.dim());
        law.validate()?;
        law.check_fits(&make_box(params.dim(), n)?)?;
        Ok(Cell { n, params, law })
    }

    pub fn d(&self) -> usize {
        self.params.dim()
    }

    pub fn lattice(&self) -> Result<LatticeBox, EstimatorError> {
        Ok(make_box(self.d(), self.n)?)
    }

    pub fn meta(&self) -> CellMeta {
        CellMeta {
            d: self.d(),
            n: self.n,
            lambda: self.params.lambda(),
            law: self.law.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub trials: u64,
    pub master_seed: u64,
}

impl TrialPlan {
    pub fn new(trials: u64, master_seed: u64) -> Self {
        TrialPlan { trials, master_seed }
    }

    fn check(&self) -> Result<(), EstimatorError> {
        if self.trials == 0 {
            Err(EstimatorError::NoTrials)
        } else {
            Ok(())
        }
    }
}

/// Seeds of trial `t` in stream `stream`: one for the initial law, one for
/// the stacks.
pub fn trial_seeds(master: u64, stream: u64, t: u64) -> (u64, u64) {
    let key = derive_seed(master, stream, t);
    (
        derive_seed(key, streams::LAW, 0),
        derive_seed(key, streams::STACKS, 0),
    )
}

/// Initial configuration and stacks of one trial.
pub fn trial_instance(cell: &Cell, lattice: &LatticeBox, master: u64, stream: u64, t: u64) -> (Configuration, StackSource) {
    let (law_seed, stack_seed) = trial_seeds(master, stream, t);
    let cfg = cell.law.sample(lattice, &mut SplitMix64::new(law_seed));
    (cfg, StackSource::new(stack_seed, cell.params))
}

/// Runs `f` on trial indices `0..trials` in parallel and returns the results
/// in trial order.
pub fn run_trials<T, F>(trials: u64, f: F) -> Result<Vec<T>, EstimatorError>
where
    T: Send,
    F: Fn(u64) -> Result<T, EstimatorError> + Sync + Send,
{
    (0..trials).into_par_iter().map(f).collect()
}

/// Mean and standard error of the mean, summed in the given order.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0) / n).sqrt())
}

/// Frequency and binomial standard error.
pub fn proportion(hits: u64, trials: u64) -> (f64, f64) {
    let p = hits as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

/// `(a - b) / sqrt(se_a^2 + se_b^2)`, with exact agreement giving 0 and an
/// exact disagreement giving infinity.
pub fn z_score(a: f64, se_a: f64, b: f64, se_b: f64) -> f64 {
    let diff = a - b;
    let se = se_a.hypot(se_b);
    if se > 0.0 {
        diff / se
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMeta {
    pub d: usize,
    pub n: usize,
    pub lambda: f64,
    pub law: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub value: f64,
    pub std_error: f64,
    pub ci95: [f64; 2],
    pub trials: u64,
    pub master_seed: u64,
    pub meta: CellMeta,
}

impl EstimateReport {
    pub fn new(value: f64, std_error: f64, plan: &TrialPlan, meta: CellMeta) -> Self {
        EstimateReport {
            value,
            std_error,
            ci95: [value - Z95 * std_error, value + Z95 * std_error],
            trials: plan.trials,
            master_seed: plan.master_seed,
            meta,
        }
    }

    /// Flat CSV row.
    pub fn row(&self, quantity: &str) -> EstimateRow {
        EstimateRow {
            quantity: quantity.to_string(),
            d: self.meta.d,
            n: self.meta.n,
            lambda: self.meta.lambda,
            law: self.meta.law.clone(),
            value: self.value,
            std_error: self.std_error,
            ci_low: self.ci95[0],
            ci_high: self.ci95[1],
            trials: self.trials,
            master_seed: self.master_seed,
        }
    }
}

/// CSV schema for estimates, in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub quantity: String,
    pub d: usize,
    pub n: usize,
    pub lambda: f64,
    pub law: String,
    pub value: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: u64,
    pub master_seed: u64,
}

/// `P(0 ∈ Stab σ)`: the frequency of a sleeping origin after true
/// stabilization.
pub fn estimate_occupation(cell: &Cell, plan: &TrialPlan) -> Result<EstimateReport, EstimatorError> {
    let hits = occupation_hits(cell, plan, streams::OCCUPATION)?;
    let (p, se) = proportion(hits, plan.trials);
    Ok(EstimateReport::new(p, se, plan, cell.meta()))
}

fn occupation_hits(cell: &Cell, plan: &TrialPlan, stream: u64) -> Result<u64, EstimatorError> {
    plan.check()?;
    let lattice = cell.lattice()?;
    let hits = run_trials(plan.trials, |t| {
        let (mut cfg, src) = trial_instance(cell, &lattice, plan.master_seed, stream, t);
        engine::stabilize(&mut cfg, &src, &StabilizationMode::True, Default::default())?;
        Ok(cfg.origin_state() == SiteState::Sleeping)
    })?;
    Ok(hits.into_iter().filter(|&h| h).count() as u64)
}

/// Chance counts of `plan.trials` iterative strong stabilizations.
pub fn chance_samples(cell: &Cell, plan: &TrialPlan, stream: u64) -> Result<Vec<u64>, EstimatorError> {
    plan.check()?;
    let lattice = cell.lattice()?;
    run_trials(plan.trials, |t| {
        let (cfg, src) = trial_instance(cell, &lattice, plan.master_seed, stream, t);
        Ok(strong_stabilize_iterative(&cfg, &src)?.ch)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub k: u64,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceDistribution {
    /// `P(Ch >= k)` for `k = 1..=k_max`.
    pub tails: Vec<TailPoint>,
    pub mean_ch: EstimateReport,
    pub mean_ach: EstimateReport,
}

fn tails_of(chs: &[u64], k_max: u64) -> Vec<TailPoint> {
    let n = chs.len() as u64;
    (1..=k_max)
        .map(|k| {
            let (value, std_error) = proportion(chs.iter().filter(|&&c| c >= k).count() as u64, n);
            TailPoint { k, value, std_error }
        })
        .collect()
}

/// Empirical tail of the chance count and the mean additional chances.
pub fn chance_distribution(cell: &Cell, plan: &TrialPlan, k_max: u64) -> Result<ChanceDistribution, EstimatorError> {
    let chs = chance_samples(cell, plan, streams::CHANCE_TAIL)?;
    let as_f64 = |f: fn(u64) -> u64| chs.iter().map(|&c| f(c) as f64).collect::<Vec<_>>();
    let (ch, ch_se) = mean_se(&as_f64(|c| c));
    let (ach, ach_se) = mean_se(&as_f64(|c| c.saturating_sub(1)));
    Ok(ChanceDistribution {
        tails: tails_of(&chs, k_max),
        mean_ch: EstimateReport::new(ch, ch_se, plan, cell.meta()),
        mean_ach: EstimateReport::new(ach, ach_se, plan, cell.meta()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub meta: CellMeta,
    pub trials: u64,
    pub master_seed: u64,
    /// Frequency of an occupied origin after true stabilization.
    pub direct: Estimate,
    /// `Σ_k p_s p_j^(k-1) P(Ch >= k)`.
    pub series: Estimate,
    /// `1 - E[p_j^Ch]`.
    pub generating: Estimate,
    pub z_direct_series: f64,
    pub z_direct_generating: f64,
    pub z_series_generating: f64,
    pub passed: bool,
}

impl IdentityReport {
    pub fn max_abs_z(&self) -> f64 {
        self.z_direct_series
            .abs()
            .max(self.z_direct_generating.abs())
            .max(self.z_series_generating.abs())
    }
}

/// Three estimates of the origin occupation from independent trial streams:
/// the direct frequency, the chance series and the chance generating
/// function. Passes when all pairwise |z| are below [`Z_THRESHOLD`].
pub fn verify_identity(cell: &Cell, plan: &TrialPlan) -> Result<IdentityReport, EstimatorError> {
    let (p_s, p_j) = (cell.params.p_sleep(), cell.params.p_jump());
    let hits = occupation_hits(cell, plan, streams::OCCUPATION)?;
    let (dv, dse) = proportion(hits, plan.trials);

    let chs = chance_samples(cell, plan, streams::CHANCE_TAIL)?;
    let k_max = chs.iter().copied().max().unwrap_or(0);
    let series_value: f64 = tails_of(&chs, k_max)
        .iter()
        .map(|tp| p_s * p_j.powi(tp.k as i32 - 1) * tp.value)
        .sum();
    // Per-trial contribution of the series, used for its standard error.
    let per_trial: Vec<f64> = chs
        .iter()
        .map(|&c| (1..=c).map(|k| p_s * p_j.powi(k as i32 - 1)).sum())
        .collect();
    let (_, sse) = mean_se(&per_trial);

    let chs = chance_samples(cell, plan, streams::CHANCE_GENERATING)?;
    let gen: Vec<f64> = chs.iter().map(|&c| 1.0 - p_j.powi(c as i32)).collect();
    let (gv, gse) = mean_se(&gen);

    let z_ds = z_score(dv, dse, series_value, sse);
    let z_dg = z_score(dv, dse, gv, gse);
    let z_sg = z_score(series_value, sse, gv, gse);
    let passed = [z_ds, z_dg, z_sg].iter().all(|z| z.abs() < Z_THRESHOLD);
    Ok(IdentityReport {
        meta: cell.meta(),
        trials: plan.trials,
        master_seed: plan.master_seed,
        direct: Estimate { value: dv, std_error: dse },
        series: Estimate {
            value: series_value,
            std_error: sse,
        },
        generating: Estimate { value: gv, std_error: gse },
        z_direct_series: z_ds,
        z_direct_generating: z_dg,
        z_series_generating: z_sg,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AchBoundReport {
    pub meta: CellMeta,
    pub mean_ach: Estimate,
    pub expected_returns: Estimate,
    pub combined_se: f64,
    /// `mean_ach <= expected_returns + BOUND_SIGMAS * combined_se`.
    pub passed: bool,
    pub trials: u64,
    pub master_seed: u64,
}

/// Checks `E[ACh] <= E[R(Z^d)]` against a Monte Carlo returns estimate.
pub fn verify_ach_bound(
    cell: &Cell,
    plan: &TrialPlan,
    returns: &ReturnsEstimate,
) -> Result<AchBoundReport, EstimatorError> {
    if returns.divergent {
        return Err(EstimatorError::DivergentReturns);
    }
    if returns.d != cell.d() {
        return Err(EstimatorError::DimensionMismatch {
            expected: cell.d(),
            got: returns.d,
        });
    }
    let chs = chance_samples(cell, plan, streams::CHANCE_TAIL)?;
    let ach: Vec<f64> = chs.iter().map(|&c| c.saturating_sub(1) as f64).collect();
    let (a, ase) = mean_se(&ach);
    let combined_se = ase.hypot(returns.std_error);
    Ok(AchBoundReport {
        meta: cell.meta(),
        mean_ach: Estimate { value: a, std_error: ase },
        expected_returns: Estimate {
            value: returns.mean,
            std_error: returns.std_error,
        },
        combined_se,
        passed: a <= returns.mean + BOUND_SIGMAS * combined_se,
        trials: plan.trials,
        master_seed: plan.master_seed,
    })
}

/// How much of the boundary layer to drop from a box of radius `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginRule {
    Fixed(usize),
    /// `n / 2`, rounded down.
    Half,
}

impl MarginRule {
    pub fn margin(self, n: usize) -> usize {
        match self {
            MarginRule::Fixed(m) => m,
            MarginRule::Half => n / 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationRow {
    pub n: usize,
    pub margin: usize,
    pub inner_sites: usize,
    pub inner_density: Estimate,
    pub whole_density: Estimate,
    /// `|inner density - rho|`.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub d: usize,
    pub lambda: f64,
    pub rho: f64,
    pub trials: u64,
    pub master_seed: u64,
    pub rows: Vec<ConservationRow>,
    /// Deviations strictly decrease along `rows`.
    pub deviations_decreasing: bool,
    /// Inner density at least the whole-box density in every row, up to
    /// [`BOUND_SIGMAS`] standard errors.
    pub inner_dominates: bool,
}

/// Particle density of `Stab_{V_n} σ` for i.i.d. Poisson(ρ) `σ`, on the inner
/// box `V_{n - margin}` and on the whole box.
pub fn mass_conservation_probe(
    params: Params,
    n_list: &[usize],
    rho: f64,
    plan: &TrialPlan,
    margin: MarginRule,
) -> Result<ConservationReport, EstimatorError> {
    plan.check()?;
    if n_list.is_empty() {
        return Err(EstimatorError::BadGrid("no box radius given".into()));
    }
    let lower = bounds_report(params, None).lower;
    if rho >= lower {
        return Err(EstimatorError::NotSubcritical { rho, lower });
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let cell = Cell::new(n, params, InitialLaw::IidPoisson { rho })?;
        let lattice = cell.lattice()?;
        let m = margin.margin(n);
        let inner = lattice.inner_indices(m)?;
        let master = derive_seed(plan.master_seed, streams::CONSERVATION, n as u64);
        let per_trial = run_trials(plan.trials, |t| {
            let (mut cfg, src) = trial_instance(&cell, &lattice, master, streams::CONSERVATION, t);
            engine::stabilize(&mut cfg, &src, &StabilizationMode::True, Default::default())?;
            let inner_mass: u64 = inner.iter().map(|&i| cfg.state_at(i).particles()).sum();
            Ok((
                inner_mass as f64 / inner.len() as f64,
                cfg.particles() as f64 / lattice.volume() as f64,
            ))
        })?;
        let (iv, ise) = mean_se(&per_trial.iter().map(|p| p.0).collect::<Vec<_>>());
        let (wv, wse) = mean_se(&per_trial.iter().map(|p| p.1).collect::<Vec<_>>());
        rows.push(ConservationRow {
            n,
            margin: m,
            inner_sites: inner.len(),
            inner_density: Estimate { value: iv, std_error: ise },
            whole_density: Estimate { value: wv, std_error: wse },
            deviation: (iv - rho).abs(),
        });
    }
    let deviations_decreasing = rows.windows(2).all(|w| w[1].deviation < w[0].deviation);
    let inner_dominates = rows.iter().all(|r| {
        let se = r.inner_density.std_error.hypot(r.whole_density.std_error);
        r.inner_density.value >= r.whole_density.value - BOUND_SIGMAS * se
    });
    Ok(ConservationReport {
        d: params.dim(),
        lambda: params.lambda(),
        rho,
        trials: plan.trials,
        master_seed: plan.master_seed,
        rows,
        deviations_decreasing,
        inner_dominates,
    })
}
