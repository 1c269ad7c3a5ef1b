//! Replays of one stabilization under many toppling orders.

use serde::{Deserialize, Serialize};

use super::stabilize::{all_stable, run_stabilization, RuleMap, SiteRule, Toppler};
use super::{Configuration, EngineError, OrderPolicy, SiteState, StabilizationMode, STEP_CEILING};
use crate::rng::{derive_seed, streams, SplitMix64};
use crate::stacks::StackSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbelianReport {
    /// Orders compared against the FIFO reference, LIFO included.
    pub orders: usize,
    pub mismatches: usize,
    pub reference: Configuration,
}

impl AbelianReport {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }
}

/// Stabilizes `cfg` under FIFO, LIFO and `random_orders` random policies and
/// counts results that differ from FIFO in configuration or odometer.
pub fn abelian_replay(
    cfg: &Configuration,
    src: &StackSource,
    mode: &StabilizationMode,
    random_orders: usize,
    seed: u64,
) -> Result<AbelianReport, EngineError> {
    let run = |order| -> Result<Configuration, EngineError> {
        let mut out = cfg.clone();
        super::stabilize(&mut out, src, mode, order)?;
        Ok(out)
    };
    let reference = run(OrderPolicy::Fifo)?;
    let mut mismatches = 0;
    let mut orders = 0;
    let policies = std::iter::once(OrderPolicy::Lifo).chain(
        (0..random_orders as u64).map(|i| OrderPolicy::Random(derive_seed(seed, streams::ORDER, i))),
    );
    for order in policies {
        orders += 1;
        if !run(order)?.same_state(&reference) {
            mismatches += 1;
        }
    }
    Ok(AbelianReport {
        orders,
        mismatches,
        reference,
    })
}

/// Stabilizes `cfg` under `mode` by a random sequence of acceptable
/// topplings: at each step a uniformly random unstable site is toppled,
/// except that with probability `wake_prob` (while `wake_budget` lasts) a
/// random nonempty but stable site is toppled instead, waking a sleeper or
/// forcing a resting particle at a weak site to move.
pub fn random_acceptable_stabilization(
    cfg: &Configuration,
    src: &StackSource,
    mode: &StabilizationMode,
    seed: u64,
    wake_prob: f64,
    mut wake_budget: usize,
) -> Result<(Configuration, usize), EngineError> {
    let rules = RuleMap::compile(cfg.lattice(), mode)?;
    let mut toppler = Toppler::new(src, cfg.lattice(), STEP_CEILING)?;
    let mut rng = SplitMix64::new(seed);
    let mut out = cfg.clone();
    let mut wakes = 0;
    let mut unstable = Vec::new();
    let mut resting = Vec::new();
    loop {
        unstable.clear();
        resting.clear();
        for (i, &s) in out.states().iter().enumerate() {
            if rules.is_unstable(s, i) {
                unstable.push(i);
            } else if s != SiteState::Empty {
                resting.push(i);
            }
        }
        let pick = if wake_budget > 0 && !resting.is_empty() && (unstable.is_empty() || rng.unit() < wake_prob) {
            // Stop early sometimes so sequences do not all end with a wake.
            if unstable.is_empty() && rng.unit() >= wake_prob {
                break;
            }
            wake_budget -= 1;
            wakes += 1;
            resting[rng.below(resting.len() as u32) as usize]
        } else if let Some(&i) = unstable.get(rng.below(unstable.len().max(1) as u32) as usize) {
            i
        } else {
            break;
        };
        toppler.topple(&mut out, pick, rules.rule(pick) == SiteRule::Strong)?;
    }
    debug_assert!(all_stable(&out, &rules));
    Ok((out, wakes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub trials: usize,
    pub violations: usize,
    /// Acceptable-only topplings performed over all trials.
    pub wakes: usize,
    /// Largest total odometer excess over the stabilizing odometer.
    pub max_excess: u64,
}

impl DominationReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks that every random acceptable route to stability uses at least the
/// stabilizing odometer at every site.
pub fn least_action_replay(
    cfg: &Configuration,
    src: &StackSource,
    mode: &StabilizationMode,
    trials: usize,
    seed: u64,
) -> Result<DominationReport, EngineError> {
    let mut reference = cfg.clone();
    {
        let rules = RuleMap::compile(cfg.lattice(), mode)?;
        let mut toppler = Toppler::new(src, cfg.lattice(), STEP_CEILING)?;
        run_stabilization(&mut toppler, &mut reference, &rules, OrderPolicy::Fifo)?;
    }
    let mut report = DominationReport {
        trials,
        violations: 0,
        wakes: 0,
        max_excess: 0,
    };
    let budget = 2 * cfg.lattice().volume();
    for t in 0..trials as u64 {
        let (out, wakes) = random_acceptable_stabilization(
            cfg,
            src,
            mode,
            derive_seed(seed, streams::REPLAY, t),
            0.25,
            budget,
        )?;
        report.wakes += wakes;
        if out.odometer().dominates(reference.odometer()) {
            let excess = out.odometer().total() - reference.odometer().total();
            report.max_excess = report.max_excess.max(excess);
        } else {
            report.violations += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{make_box, Site};
    use crate::stacks::Params;

    fn sample(d: usize, n: usize, rng: &mut SplitMix64) -> Configuration {
        let lattice = make_box(d, n).unwrap();
        let mut cfg = Configuration::empty(lattice.clone());
        for _ in 0..(1 + rng.below(10)) {
            let i = rng.below(lattice.volume() as u32) as usize;
            let x = lattice.site_of(i);
            if rng.below(4) == 0 && cfg.state_at(i) == SiteState::Empty {
                cfg.set_state(&x, SiteState::Sleeping).unwrap();
            } else {
                cfg.add_active(&x, 1).unwrap();
            }
        }
        cfg
    }

    #[test]
    fn orders_agree_in_every_mode() {
        let mut rng = SplitMix64::new(5);
        for t in 0..60u64 {
            let d = 1 + (t % 3) as usize;
            let n = 1 + (t % 3) as usize;
            let cfg = sample(d, n, &mut rng);
            let src = StackSource::new(t, Params::new(d, 1.0).unwrap());
            for mode in [
                StabilizationMode::True,
                StabilizationMode::weak_origin(d),
                StabilizationMode::strong_origin(d),
            ] {
                let r = abelian_replay(&cfg, &src, &mode, 10, t).unwrap();
                assert_eq!(r.orders, 11);
                assert!(r.passed(), "mode {mode:?}, trial {t}");
            }
        }
    }

    #[test]
    fn stabilizing_order_dominates_itself() {
        let cfg = Configuration::delta_origin(make_box(2, 2).unwrap());
        let src = StackSource::new(2, Params::new(2, 1.0).unwrap());
        let (out, wakes) =
            random_acceptable_stabilization(&cfg, &src, &StabilizationMode::True, 1, 0.0, 0).unwrap();
        assert_eq!(wakes, 0);
        let reference = crate::engine::stabilized(&cfg, &src, &StabilizationMode::True).unwrap();
        assert_eq!(out.odometer(), reference.odometer());
    }

    #[test]
    fn waking_a_sleeper_never_lowers_the_odometer() {
        // Lone sleeper next to an active particle: force one extra wake-up.
        let lattice = make_box(1, 2).unwrap();
        let mut cfg = Configuration::empty(lattice);
        cfg.set_state(&Site::new(vec![1]), SiteState::Sleeping).unwrap();
        cfg.add_active(&Site::new(vec![0]), 1).unwrap();
        let mut woke = 0;
        for seed in 0..200 {
            let src = StackSource::new(seed, Params::new(1, 1.0).unwrap());
            let reference = crate::engine::stabilized(&cfg, &src, &StabilizationMode::True).unwrap();
            let (out, wakes) =
                random_acceptable_stabilization(&cfg, &src, &StabilizationMode::True, seed, 1.0, 1).unwrap();
            woke += wakes;
            assert!(out.odometer().dominates(reference.odometer()));
        }
        assert!(woke > 0);
    }

    #[test]
    fn least_action_holds_in_every_mode() {
        let mut rng = SplitMix64::new(17);
        for t in 0..40u64 {
            let d = 1 + (t % 2) as usize;
            let cfg = sample(d, 2, &mut rng);
            let src = StackSource::new(t, Params::new(d, 0.8).unwrap());
            for mode in [
                StabilizationMode::True,
                StabilizationMode::weak_origin(d),
                StabilizationMode::strong_origin(d),
            ] {
                let r = least_action_replay(&cfg, &src, &mode, 20, t).unwrap();
                assert!(r.passed());
            }
        }
    }
}
