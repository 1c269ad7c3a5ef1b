//! Named check suites. Each check yields a [`CheckReport`]; exact checks
//! (abelian, least action, coupling) demand zero violations, statistical ones
//! use the thresholds of [`crate::estimators`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::engine::{
    abelian_replay, coupled_true_vs_strong, least_action_replay, Configuration, EngineError, SiteState,
    StabilizationMode,
};
use crate::estimators::{
    five_step_report, mass_conservation_probe, run_trials, verify_ach_bound, verify_identity, Cell, EstimatorError,
    InitialLaw, MarginRule, TrialPlan,
};
use crate::lattice::make_box;
use crate::rng::{derive_seed, streams, SplitMix64};
use crate::stacks::{Params, StackSource};
use crate::walks::{expected_returns, DEFAULT_MAX_STEPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Abelian,
    LeastAction,
    Coupling,
    Identity,
    AchBound,
    FiveStep,
    Conservation,
    All,
}

impl Suite {
    pub const EACH: [Suite; 7] = [
        Suite::Abelian,
        Suite::LeastAction,
        Suite::Coupling,
        Suite::Identity,
        Suite::AchBound,
        Suite::FiveStep,
        Suite::Conservation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Abelian => "abelian",
            Suite::LeastAction => "least-action",
            Suite::Coupling => "coupling",
            Suite::Identity => "identity",
            Suite::AchBound => "ach-bound",
            Suite::FiveStep => "five-step",
            Suite::Conservation => "conservation",
            Suite::All => "all",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::EACH
            .into_iter()
            .chain([Suite::All])
            .find(|suite| suite.name() == s)
            .ok_or_else(|| format!("unknown suite '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub suite: Suite,
    pub check: String,
    pub passed: bool,
    pub details: Value,
}

/// Overrides for suite defaults. `None` keeps the suite's own choice.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub d: Option<usize>,
    pub n: Option<usize>,
    pub lambda: Option<f64>,
    pub law: Option<InitialLaw>,
    pub trials: Option<u64>,
    pub master_seed: u64,
    pub escape_radius: Option<u64>,
    pub max_steps: Option<u64>,
    pub rho: Option<f64>,
    pub n_list: Option<Vec<usize>>,
    pub margin: Option<usize>,
}

impl VerifyOptions {
    fn dims(&self, default: &[usize]) -> Vec<usize> {
        self.d.map_or_else(|| default.to_vec(), |d| vec![d])
    }

    fn lambda(&self) -> f64 {
        self.lambda.unwrap_or(1.0)
    }

    fn params(&self, d: usize) -> Result<Params, EstimatorError> {
        Ok(Params::new(d, self.lambda())?)
    }
}

/// Random small configuration: up to `max_particles` particles on a box of
/// radius at most `n_max`, with a share of them asleep when `sleepers` is set.
pub fn random_instance(
    rng: &mut SplitMix64,
    d: usize,
    n_max: usize,
    max_particles: u32,
    sleepers: bool,
) -> Configuration {
    let n = rng.below(n_max as u32 + 1) as usize;
    let lattice = make_box(d, n).expect("small box");
    let mut cfg = Configuration::empty(lattice.clone());
    let particles = 1 + rng.below(max_particles);
    for _ in 0..particles {
        let i = rng.below(lattice.volume() as u32) as usize;
        let x = lattice.site_of(i);
        if sleepers && cfg.state_at(i) == SiteState::Empty && rng.below(3) == 0 {
            cfg.set_state(&x, SiteState::Sleeping).expect("site in box");
        } else {
            cfg.add_active(&x, 1).expect("site in box");
        }
    }
    cfg
}

fn modes(d: usize) -> [StabilizationMode; 3] {
    [
        StabilizationMode::True,
        StabilizationMode::weak_origin(d),
        StabilizationMode::strong_origin(d),
    ]
}

/// Abelian property: `instances` random configurations, each stabilized in
/// every mode under FIFO, LIFO and `orders` random orders.
pub fn check_abelian(
    dims: &[usize],
    n_max: usize,
    instances: u64,
    orders: usize,
    lambda: f64,
    seed: u64,
) -> Result<CheckReport, EstimatorError> {
    let per = run_trials(instances, |t| {
        let mut rng = SplitMix64::new(derive_seed(seed, streams::ORDER, t));
        let d = dims[t as usize % dims.len()];
        let cfg = random_instance(&mut rng, d, n_max, 10, true);
        let src = StackSource::new(rng.next(), Params::new(d, lambda)?);
        let mut mismatches = 0;
        for mode in modes(d) {
            mismatches += abelian_replay(&cfg, &src, &mode, orders, rng.next())?.mismatches;
        }
        Ok(mismatches)
    })?;
    let bad = per.iter().filter(|&&m| m > 0).count();
    Ok(CheckReport {
        suite: Suite::Abelian,
        check: "order independence of (Stab, Odom)".into(),
        passed: bad == 0,
        details: json!({
            "instances": instances, "orders_per_mode": orders + 1, "modes": 3,
            "dims": dims, "n_max": n_max, "instances_with_mismatch": bad,
        }),
    })
}

/// Least action principle: random acceptable routes to stability never use
/// less than the stabilizing odometer.
pub fn check_least_action(
    dims: &[usize],
    n_max: usize,
    instances: u64,
    orders: usize,
    lambda: f64,
    seed: u64,
) -> Result<CheckReport, EstimatorError> {
    let per = run_trials(instances, |t| {
        let mut rng = SplitMix64::new(derive_seed(seed, streams::REPLAY, t));
        let d = dims[t as usize % dims.len()];
        let cfg = random_instance(&mut rng, d, n_max, 10, true);
        let src = StackSource::new(rng.next(), Params::new(d, lambda)?);
        let mut out = (0, 0);
        for mode in modes(d) {
            let r = least_action_replay(&cfg, &src, &mode, orders, rng.next())?;
            out.0 += r.violations;
            out.1 += r.wakes;
        }
        Ok(out)
    })?;
    let violations: usize = per.iter().map(|p| p.0).sum();
    let wakes: usize = per.iter().map(|p| p.1).sum();
    Ok(CheckReport {
        suite: Suite::LeastAction,
        check: "acceptable odometers dominate the stabilizing odometer".into(),
        passed: violations == 0,
        details: json!({
            "instances": instances, "orders_per_mode": orders, "dims": dims, "n_max": n_max,
            "violations": violations, "acceptable_only_topplings": wakes,
        }),
    })
}

/// Per-trial coupling of true and strong stabilization on shared stacks.
pub fn check_coupling(
    dims: &[usize],
    n_max: usize,
    runs: u64,
    lambda: f64,
    seed: u64,
) -> Result<CheckReport, EstimatorError> {
    let per = run_trials(runs, |t| {
        let mut rng = SplitMix64::new(derive_seed(seed, streams::OCCUPATION, t));
        let d = dims[t as usize % dims.len()];
        let cfg = random_instance(&mut rng, d, n_max, 10, false);
        let src = StackSource::new(rng.next(), Params::new(d, lambda)?);
        match coupled_true_vs_strong(&cfg, &src) {
            Ok(o) => Ok(Ok(o.origin_in_true_stab)),
            Err(EngineError::CouplingViolation(msg)) => Ok(Err(msg)),
            Err(e) => Err(e.into()),
        }
    })?;
    let violations: Vec<&String> = per.iter().filter_map(|r| r.as_ref().err()).collect();
    let occupied = per.iter().filter(|r| matches!(r, Ok(true))).count();
    Ok(CheckReport {
        suite: Suite::Coupling,
        check: "origin occupied iff some sleep trial succeeds".into(),
        passed: violations.is_empty(),
        details: json!({
            "runs": runs, "dims": dims, "n_max": n_max, "origin_occupied": occupied,
            "violations": violations.len(), "first_violation": violations.first(),
        }),
    })
}

/// Runs one suite (or all of them) with `opts` overriding the defaults.
pub fn run_suite(suite: Suite, opts: &VerifyOptions) -> Result<Vec<CheckReport>, EstimatorError> {
    if suite == Suite::All {
        let mut out = Vec::new();
        for s in Suite::EACH {
            out.extend(run_suite(s, opts)?);
        }
        return Ok(out);
    }
    let seed = opts.master_seed;
    let lambda = opts.lambda();
    let report = match suite {
        Suite::Abelian => check_abelian(
            &opts.dims(&[1, 2, 3]),
            opts.n.unwrap_or(3),
            opts.trials.unwrap_or(200),
            50,
            lambda,
            seed,
        )?,
        Suite::LeastAction => check_least_action(
            &opts.dims(&[1, 2]),
            opts.n.unwrap_or(2),
            opts.trials.unwrap_or(100),
            20,
            lambda,
            seed,
        )?,
        Suite::Coupling => check_coupling(
            &opts.dims(&[1, 2]),
            opts.n.unwrap_or(2),
            opts.trials.unwrap_or(10_000),
            lambda,
            seed,
        )?,
        Suite::Identity => {
            let d = opts.d.unwrap_or(1);
            let law = opts.law.clone().unwrap_or_else(|| InitialLaw::delta_origin(d));
            let cell = Cell::new(opts.n.unwrap_or(1), opts.params(d)?, law)?;
            let r = verify_identity(&cell, &TrialPlan::new(opts.trials.unwrap_or(20_000), seed))?;
            CheckReport {
                suite,
                check: "occupation = chance series = 1 - E[p_j^Ch]".into(),
                passed: r.passed,
                details: serde_json::to_value(&r).expect("plain data"),
            }
        }
        Suite::AchBound => {
            let d = opts.d.unwrap_or(3);
            let law = opts.law.clone().unwrap_or_else(|| InitialLaw::delta_origin(d));
            let cell = Cell::new(opts.n.unwrap_or(2), opts.params(d)?, law)?;
            let trials = opts.trials.unwrap_or(20_000);
            let returns = expected_returns(
                d,
                trials,
                opts.escape_radius.unwrap_or(100),
                opts.max_steps.unwrap_or(DEFAULT_MAX_STEPS),
                derive_seed(seed, streams::WALKS, 0),
                false,
            )?;
            let r = verify_ach_bound(&cell, &TrialPlan::new(trials, seed), &returns)?;
            CheckReport {
                suite,
                check: "E[ACh] <= E[R]".into(),
                passed: r.passed,
                details: json!({ "bound": r, "returns": returns }),
            }
        }
        Suite::FiveStep => {
            let d = opts.d.unwrap_or(1);
            let law = opts.law.clone().unwrap_or(InitialLaw::FilledBall {
                rest: Box::new(InitialLaw::IidPoisson { rho: 0.2 }),
            });
            let cell = Cell::new(opts.n.unwrap_or(3), opts.params(d)?, law)?;
            let r = five_step_report(&cell, &TrialPlan::new(opts.trials.unwrap_or(20_000), seed))?;
            CheckReport {
                suite,
                check: "five-step probabilities".into(),
                passed: r.passed(),
                details: serde_json::to_value(&r).expect("plain data"),
            }
        }
        Suite::Conservation => {
            let d = opts.d.unwrap_or(3);
            let rho = opts.rho.unwrap_or(0.3);
            let n_list = opts.n_list.clone().unwrap_or_else(|| vec![3, 5, 7]);
            let margin = opts.margin.map_or(MarginRule::Half, MarginRule::Fixed);
            let r = mass_conservation_probe(
                opts.params(d)?,
                &n_list,
                rho,
                &TrialPlan::new(opts.trials.unwrap_or(1_000), seed),
                margin,
            )?;
            let last_ok = r.rows.last().is_some_and(|row| row.deviation < 0.02);
            CheckReport {
                suite,
                check: "inner density approaches rho".into(),
                passed: r.deviations_decreasing && r.inner_dominates && last_ok,
                details: serde_json::to_value(&r).expect("plain data"),
            }
        }
        Suite::All => unreachable!(),
    };
    Ok(vec![report])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_roundtrip() {
        for s in Suite::EACH.into_iter().chain([Suite::All]) {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
            assert_eq!(serde_json::to_value(s).unwrap(), json!(s.name()));
        }
        assert!("abelain".parse::<Suite>().is_err());
    }

    #[test]
    fn exact_suites_pass_small() {
        assert!(check_abelian(&[1, 2], 2, 20, 5, 1.0, 1).unwrap().passed);
        assert!(check_least_action(&[1, 2], 2, 10, 5, 1.0, 1).unwrap().passed);
        assert!(check_coupling(&[1, 2], 2, 500, 1.0, 1).unwrap().passed);
    }

    #[test]
    fn random_instances_respect_limits() {
        let mut rng = SplitMix64::new(1);
        for _ in 0..200 {
            let cfg = random_instance(&mut rng, 2, 3, 10, false);
            assert!(cfg.lattice().radius() <= 3);
            assert!((1..=10).contains(&cfg.particles()));
            assert!(cfg.is_all_active());
        }
    }

    #[test]
    fn identity_suite_with_overrides() {
        let opts = VerifyOptions {
            trials: Some(5_000),
            master_seed: 3,
            ..Default::default()
        };
        let reports = run_suite(Suite::Identity, &opts).unwrap();
        assert_eq!(reports.len(), 1);
        assert!(reports[0].passed);
    }
}
