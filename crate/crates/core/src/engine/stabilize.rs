use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Configuration, EngineError, SiteState};
use crate::lattice::{LatticeBox, Site};
use crate::rng::SplitMix64;
use crate::stacks::{Instruction, StackSource};

/// Instruction consumptions allowed per stabilization. Finite-volume
/// stabilization terminates almost surely, so hitting this is a defect.
pub const STEP_CEILING: u64 = 1_000_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilizationMode {
    True,
    /// Sites of `U` may keep one active particle.
    Weak(Vec<Site>),
    /// Sites of `U` must end empty; sleep instructions there are void.
    Strong(Vec<Site>),
}

impl StabilizationMode {
    pub fn weak_origin(d: usize) -> Self {
        StabilizationMode::Weak(vec![Site::origin(d)])
    }

    pub fn strong_origin(d: usize) -> Self {
        StabilizationMode::Strong(vec![Site::origin(d)])
    }
}

/// Order in which unstable sites are toppled. By the abelian property the
/// result never depends on it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrderPolicy {
    /// Deduplicated FIFO queue.
    #[default]
    Fifo,
    Lifo,
    /// Uniformly random unstable site at each step, driven by the given seed.
    Random(u64),
}


#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StabilizeStats {
    pub topplings: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SiteRule {
    Normal,
    Weak,
    Strong,
}

/// Per-site stability rule compiled from a [`StabilizationMode`].
#[derive(Debug, Clone)]
pub(crate) struct RuleMap {
    rules: Vec<SiteRule>,
}

impl RuleMap {
    pub(crate) fn compile(lattice: &LatticeBox, mode: &StabilizationMode) -> Result<Self, EngineError> {
        let mut rules = vec![SiteRule::Normal; lattice.volume()];
        let (set, rule) = match mode {
            StabilizationMode::True => (&[][..], SiteRule::Normal),
            StabilizationMode::Weak(u) => (&u[..], SiteRule::Weak),
            StabilizationMode::Strong(u) => (&u[..], SiteRule::Strong),
        };
        for x in set {
            lattice.check_site(x)?;
            let i = lattice
                .index_of(x)
                .ok_or_else(|| EngineError::OutsideBox(x.clone()))?;
            rules[i] = rule;
        }
        Ok(RuleMap { rules })
    }

    #[inline]
    pub(crate) fn rule(&self, index: usize) -> SiteRule {
        self.rules[index]
    }

    #[inline]
    pub(crate) fn is_unstable(&self, state: SiteState, index: usize) -> bool {
        unstable_under(state, self.rules[index])
    }
}

#[inline]
fn unstable_under(state: SiteState, rule: SiteRule) -> bool {
    match rule {
        SiteRule::Normal => matches!(state, SiteState::Active(_)),
        SiteRule::Weak => matches!(state, SiteState::Active(c) if c >= 2),
        SiteRule::Strong => state != SiteState::Empty,
    }
}

/// What one toppling did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Effect {
    Slept,
    /// Sleep instruction consumed without a state change.
    SleepVoid,
    Moved(usize),
    Killed,
}

/// Toppling machinery bound to one stack source and one box.
pub(crate) struct Toppler<'a> {
    src: &'a StackSource,
    keys: Vec<u64>,
    pub(crate) steps: u64,
    limit: u64,
}

impl<'a> Toppler<'a> {
    pub(crate) fn new(src: &'a StackSource, lattice: &LatticeBox, limit: u64) -> Result<Self, EngineError> {
        if src.params().dim() != lattice.dim() {
            return Err(EngineError::DimensionMismatch {
                params: src.params().dim(),
                lattice: lattice.dim(),
            });
        }
        let keys = lattice.sites().map(|x| src.site_key(&x)).collect();
        Ok(Toppler {
            src,
            keys,
            steps: 0,
            limit,
        })
    }

    #[inline]
    pub(crate) fn peek(&self, cfg: &Configuration, index: usize) -> Instruction {
        self.src
            .instruction_keyed(self.keys[index], cfg.odometer.counts[index])
    }

    /// Acceptable toppling of a nonempty site: a sleeper is woken first, then
    /// the next instruction is executed. With `sleep_void` set, a sleep
    /// instruction leaves the site unchanged.
    #[inline]
    pub(crate) fn topple(
        &mut self,
        cfg: &mut Configuration,
        index: usize,
        sleep_void: bool,
    ) -> Result<Effect, EngineError> {
        if self.steps >= self.limit {
            return Err(EngineError::StepLimit { limit: self.limit });
        }
        let effect = apply_next(cfg, self.src, self.keys[index], index, sleep_void)?;
        self.steps += 1;
        Ok(effect)
    }
}

#[inline]
fn apply_next(
    cfg: &mut Configuration,
    src: &StackSource,
    key: u64,
    index: usize,
    sleep_void: bool,
) -> Result<Effect, EngineError> {
    let count = match cfg.states[index] {
        SiteState::Empty => {
            return Err(EngineError::EmptySite(cfg.lattice.site_of(index)));
        }
        SiteState::Sleeping => 1,
        SiteState::Active(c) => c,
    };
    let instruction = src.instruction_keyed(key, cfg.odometer.counts[index]);
    cfg.odometer.counts[index] += 1;
    match instruction {
        Instruction::Sleep => {
            if count == 1 && !sleep_void {
                cfg.states[index] = SiteState::Sleeping;
                Ok(Effect::Slept)
            } else {
                // A woken lone sleeper stays awake.
                cfg.states[index] = SiteState::Active(count);
                Ok(Effect::SleepVoid)
            }
        }
        Instruction::Jump(dir) => {
            cfg.states[index] = if count == 1 {
                SiteState::Empty
            } else {
                SiteState::Active(count - 1)
            };
            match cfg.lattice.neighbor_index(index, dir) {
                Some(t) => {
                    cfg.states[t] = cfg.states[t].with_arrival();
                    Ok(Effect::Moved(t))
                }
                None => {
                    cfg.killed += 1;
                    Ok(Effect::Killed)
                }
            }
        }
    }
}

enum Worklist {
    Fifo(VecDeque<usize>),
    Lifo(Vec<usize>),
    Random(Vec<usize>, SplitMix64),
}

impl Worklist {
    fn new(order: OrderPolicy) -> Self {
        match order {
            OrderPolicy::Fifo => Worklist::Fifo(VecDeque::new()),
            OrderPolicy::Lifo => Worklist::Lifo(Vec::new()),
            OrderPolicy::Random(seed) => Worklist::Random(Vec::new(), SplitMix64::new(seed)),
        }
    }

    fn push(&mut self, i: usize) {
        match self {
            Worklist::Fifo(q) => q.push_back(i),
            Worklist::Lifo(v) | Worklist::Random(v, _) => v.push(i),
        }
    }

    fn pop(&mut self) -> Option<usize> {
        match self {
            Worklist::Fifo(q) => q.pop_front(),
            Worklist::Lifo(v) => v.pop(),
            Worklist::Random(v, rng) => {
                if v.is_empty() {
                    None
                } else {
                    let k = rng.below(v.len() as u32) as usize;
                    Some(v.swap_remove(k))
                }
            }
        }
    }
}

/// Topples unstable sites (under `rules`) until none is left.
pub(crate) fn run_stabilization(
    toppler: &mut Toppler<'_>,
    cfg: &mut Configuration,
    rules: &RuleMap,
    order: OrderPolicy,
) -> Result<u64, EngineError> {
    let start = toppler.steps;
    let mut queued = vec![false; cfg.states.len()];
    let mut work = Worklist::new(order);
    for (i, &s) in cfg.states.iter().enumerate() {
        if rules.is_unstable(s, i) {
            queued[i] = true;
            work.push(i);
        }
    }
    // Arrivals never stabilize a site, so a queued site stays unstable until
    // it is popped.
    while let Some(i) = work.pop() {
        let effect = toppler.topple(cfg, i, rules.rule(i) == SiteRule::Strong)?;
        if let Effect::Moved(t) = effect {
            if !queued[t] && rules.is_unstable(cfg.states[t], t) {
                queued[t] = true;
                work.push(t);
            }
        }
        if rules.is_unstable(cfg.states[i], i) {
            work.push(i);
        } else {
            queued[i] = false;
        }
    }
    Ok(toppler.steps - start)
}

/// Stabilizes `cfg` in place under `mode`, starting from its current odometer.
pub fn stabilize(
    cfg: &mut Configuration,
    src: &StackSource,
    mode: &StabilizationMode,
    order: OrderPolicy,
) -> Result<StabilizeStats, EngineError> {
    stabilize_with_limit(cfg, src, mode, order, STEP_CEILING)
}

/// [`stabilize`] with an explicit instruction ceiling.
pub fn stabilize_with_limit(
    cfg: &mut Configuration,
    src: &StackSource,
    mode: &StabilizationMode,
    order: OrderPolicy,
    limit: u64,
) -> Result<StabilizeStats, EngineError> {
    let rules = RuleMap::compile(&cfg.lattice, mode)?;
    let mut toppler = Toppler::new(src, &cfg.lattice, limit)?;
    let topplings = run_stabilization(&mut toppler, cfg, &rules, order)?;
    Ok(StabilizeStats { topplings })
}

/// Returns the stabilization of `cfg`, leaving the input untouched.
pub fn stabilized(
    cfg: &Configuration,
    src: &StackSource,
    mode: &StabilizationMode,
) -> Result<Configuration, EngineError> {
    let mut out = cfg.clone();
    stabilize(&mut out, src, mode, OrderPolicy::Fifo)?;
    Ok(out)
}

/// Topples `x` once under true-stabilization semantics and returns the
/// executed instruction. A sleeping site is only accepted when `acceptable`
/// is set, in which case it is woken first.
pub fn topple(
    cfg: &mut Configuration,
    src: &StackSource,
    x: &Site,
    acceptable: bool,
) -> Result<Instruction, EngineError> {
    cfg.lattice.check_site(x)?;
    let i = cfg
        .lattice
        .index_of(x)
        .ok_or_else(|| EngineError::OutsideBox(x.clone()))?;
    match cfg.states[i] {
        SiteState::Empty => return Err(EngineError::EmptySite(x.clone())),
        SiteState::Sleeping if !acceptable => return Err(EngineError::SleepingSite(x.clone())),
        _ => {}
    }
    let key = src.site_key(x);
    let instruction = src.instruction_keyed(key, cfg.odometer.counts[i]);
    apply_next(cfg, src, key, i, false)?;
    Ok(instruction)
}

/// Stability of the site `x` under `mode`.
pub fn is_stable(cfg: &Configuration, x: &Site, mode: &StabilizationMode) -> Result<bool, EngineError> {
    cfg.lattice.check_site(x)?;
    let i = cfg
        .lattice
        .index_of(x)
        .ok_or_else(|| EngineError::OutsideBox(x.clone()))?;
    let rule = match mode {
        StabilizationMode::True => SiteRule::Normal,
        StabilizationMode::Weak(u) if u.contains(x) => SiteRule::Weak,
        StabilizationMode::Strong(u) if u.contains(x) => SiteRule::Strong,
        _ => SiteRule::Normal,
    };
    Ok(!unstable_under(cfg.states[i], rule))
}

/// Every site stable under `mode`.
pub(crate) fn all_stable(cfg: &Configuration, rules: &RuleMap) -> bool {
    cfg.states
        .iter()
        .enumerate()
        .all(|(i, &s)| !rules.is_unstable(s, i))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_box;
    use crate::stacks::Params;

    fn params(d: usize) -> Params {
        Params::new(d, 1.0).unwrap()
    }

    /// First seed whose stack at `x` starts with `want`.
    fn seed_with_first(d: usize, x: &Site, want: impl Fn(Instruction) -> bool) -> StackSource {
        (0..)
            .map(|s| StackSource::new(s, params(d)))
            .find(|src| want(src.instruction(x, 0)))
            .unwrap()
    }

    #[test]
    fn lone_particle_falls_asleep() {
        let o = Site::origin(1);
        let src = seed_with_first(1, &o, |i| i == Instruction::Sleep);
        let mut cfg = Configuration::delta_origin(make_box(1, 1).unwrap());
        assert_eq!(topple(&mut cfg, &src, &o, false).unwrap(), Instruction::Sleep);
        assert_eq!(cfg.state(&o), Some(SiteState::Sleeping));
        assert_eq!(cfg.odometer().get(&o), Some(1));
    }

    #[test]
    fn sleep_is_void_with_company() {
        let o = Site::origin(1);
        let src = seed_with_first(1, &o, |i| i == Instruction::Sleep);
        let mut cfg = Configuration::empty(make_box(1, 1).unwrap());
        cfg.add_active(&o, 2).unwrap();
        topple(&mut cfg, &src, &o, false).unwrap();
        assert_eq!(cfg.state(&o), Some(SiteState::Active(2)));
        assert_eq!(cfg.odometer().get(&o), Some(1));
    }

    #[test]
    fn jump_out_of_single_site_box_kills() {
        let o = Site::origin(1);
        let src = seed_with_first(1, &o, |i| matches!(i, Instruction::Jump(_)));
        let mut cfg = Configuration::delta_origin(make_box(1, 0).unwrap());
        topple(&mut cfg, &src, &o, false).unwrap();
        assert_eq!(cfg.state(&o), Some(SiteState::Empty));
        assert_eq!(cfg.killed(), 1);
        assert_eq!(cfg.particles(), 0);
    }

    #[test]
    fn topple_rejects_empty_and_sleeping() {
        let src = StackSource::new(0, params(1));
        let mut cfg = Configuration::empty(make_box(1, 1).unwrap());
        let o = Site::origin(1);
        assert!(matches!(
            topple(&mut cfg, &src, &o, false),
            Err(EngineError::EmptySite(_))
        ));
        cfg.set_state(&o, SiteState::Sleeping).unwrap();
        assert!(matches!(
            topple(&mut cfg, &src, &o, false),
            Err(EngineError::SleepingSite(_))
        ));
        // Acceptable toppling wakes it first.
        topple(&mut cfg, &src, &o, true).unwrap();
        assert_eq!(cfg.odometer().get(&o), Some(1));
    }

    #[test]
    fn stability_by_mode() {
        let lattice = make_box(2, 1).unwrap();
        let o = Site::origin(2);
        let mut cfg = Configuration::empty(lattice);
        cfg.set_state(&o, SiteState::Sleeping).unwrap();
        let empty_weak = StabilizationMode::Weak(vec![]);
        assert!(is_stable(&cfg, &o, &empty_weak).unwrap());
        assert!(is_stable(&cfg, &o, &StabilizationMode::Strong(vec![])).unwrap());

        cfg.set_state(&o, SiteState::Active(1)).unwrap();
        assert!(!is_stable(&cfg, &o, &StabilizationMode::True).unwrap());
        assert!(is_stable(&cfg, &o, &StabilizationMode::weak_origin(2)).unwrap());
        assert!(!is_stable(&cfg, &o, &StabilizationMode::strong_origin(2)).unwrap());

        cfg.set_state(&o, SiteState::Active(2)).unwrap();
        assert!(!is_stable(&cfg, &o, &StabilizationMode::weak_origin(2)).unwrap());
        cfg.set_state(&o, SiteState::Sleeping).unwrap();
        assert!(!is_stable(&cfg, &o, &StabilizationMode::strong_origin(2)).unwrap());
    }

    #[test]
    fn already_stable_is_unchanged() {
        let lattice = make_box(2, 2).unwrap();
        let states = vec![SiteState::Sleeping; lattice.volume()];
        let cfg = Configuration::from_states(lattice, states).unwrap();
        let src = StackSource::new(3, params(2));
        let out = stabilized(&cfg, &src, &StabilizationMode::True).unwrap();
        assert_eq!(out, cfg);
        assert_eq!(out.odometer().total(), 0);
    }

    #[test]
    fn single_site_occupation_rate() {
        let lattice = make_box(1, 0).unwrap();
        let trials = 20_000;
        let asleep = (0..trials)
            .filter(|&s| {
                let src = StackSource::new(s, params(1));
                let out = stabilized(&Configuration::delta_origin(lattice.clone()), &src, &StabilizationMode::True)
                    .unwrap();
                out.origin_state() == SiteState::Sleeping
            })
            .count() as f64
            / trials as f64;
        // p_s = 1/2, SE = 0.0035.
        assert!((asleep - 0.5).abs() < 0.015, "{asleep}");
    }

    #[test]
    fn step_ceiling_is_reported() {
        let lattice = make_box(2, 3).unwrap();
        let mut cfg = Configuration::empty(lattice);
        cfg.add_active(&Site::origin(2), 50).unwrap();
        let src = StackSource::new(1, params(2));
        let err = stabilize_with_limit(&mut cfg, &src, &StabilizationMode::True, OrderPolicy::Fifo, 10)
            .unwrap_err();
        assert_eq!(err, EngineError::StepLimit { limit: 10 });
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut cfg = Configuration::delta_origin(make_box(2, 1).unwrap());
        let src = StackSource::new(1, params(3));
        assert!(matches!(
            stabilize(&mut cfg, &src, &StabilizationMode::True, OrderPolicy::Fifo),
            Err(EngineError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn modes_reach_their_stability() {
        let lattice = make_box(2, 2).unwrap();
        let o = Site::origin(2);
        for seed in 0..200 {
            let src = StackSource::new(seed, params(2));
            let mut base = Configuration::empty(lattice.clone());
            base.add_active(&o, 3).unwrap();
            base.add_active(&Site::new(vec![1, 0]), 1).unwrap();
            for mode in [
                StabilizationMode::True,
                StabilizationMode::weak_origin(2),
                StabilizationMode::strong_origin(2),
            ] {
                let out = stabilized(&base, &src, &mode).unwrap();
                let rules = RuleMap::compile(&lattice, &mode).unwrap();
                assert!(all_stable(&out, &rules));
                assert_eq!(out.particles() + out.killed(), 4);
                if let StabilizationMode::Weak(_) = mode {
                    assert_ne!(out.origin_state(), SiteState::Empty);
                }
                if let StabilizationMode::Strong(_) = mode {
                    assert_eq!(out.origin_state(), SiteState::Empty);
                }
            }
        }
    }
}
