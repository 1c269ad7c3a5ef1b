//! Chance counting around the origin.
//!
//! Strong stabilization with respect to the origin is run as a pre-step (weak
//! stabilization) followed by iterations of: jump the particle at the origin
//! out, weakly stabilize again, stop once the origin is empty. `Ch` counts the
//! completed iterations. Each jump-out is a sleep trial, successful when at
//! least one sleep instruction is consumed at the origin before the jump.

use serde::{Deserialize, Serialize};

use super::stabilize::{run_stabilization, Effect, RuleMap, Toppler};
use super::{Configuration, EngineError, Odometer, OrderPolicy, SiteState, StabilizationMode, STEP_CEILING};
use crate::lattice::Site;
use crate::stacks::{Instruction, StackSource};

/// Outcome of one iterative strong stabilization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceRecord {
    pub ch: u64,
    /// `max(ch - 1, 0)`.
    pub ach: u64,
    /// One entry per jump-out.
    pub sleep_trials: Vec<bool>,
    /// 1-based iteration of the first successful sleep trial.
    pub first_success_iteration: Option<usize>,
    /// Odometer after the pre-step.
    pub pre_step_odometer: Odometer,
    /// Strongly stable configuration and strong stabilizing odometer.
    pub final_config: Configuration,
}

impl ChanceRecord {
    fn new(pre_step_odometer: Odometer, final_config: Configuration, sleep_trials: Vec<bool>) -> Self {
        let ch = sleep_trials.len() as u64;
        ChanceRecord {
            ch,
            ach: ch.saturating_sub(1),
            first_success_iteration: sleep_trials.iter().position(|&t| t).map(|i| i + 1),
            sleep_trials,
            pre_step_odometer,
            final_config,
        }
    }

    pub fn any_success(&self) -> bool {
        self.first_success_iteration.is_some()
    }
}

struct Procedure<'a> {
    toppler: Toppler<'a>,
    weak: RuleMap,
    origin: usize,
}

impl<'a> Procedure<'a> {
    fn new(sigma: &Configuration, src: &'a StackSource) -> Result<Self, EngineError> {
        if !sigma.is_all_active() {
            return Err(EngineError::SleepingInput);
        }
        let lattice = sigma.lattice();
        Ok(Procedure {
            toppler: Toppler::new(src, lattice, STEP_CEILING)?,
            weak: RuleMap::compile(lattice, &StabilizationMode::weak_origin(lattice.dim()))?,
            origin: lattice.origin_index(),
        })
    }

    fn weak_stabilize(&mut self, cfg: &mut Configuration) -> Result<(), EngineError> {
        run_stabilization(&mut self.toppler, cfg, &self.weak, OrderPolicy::Fifo)?;
        Ok(())
    }

    /// Acceptably topples the origin until its particle jumps. Returns whether
    /// a sleep instruction was met first, and where the particle landed.
    fn jump_out(&mut self, cfg: &mut Configuration) -> Result<(bool, Option<usize>), EngineError> {
        debug_assert_eq!(cfg.state_at(self.origin), SiteState::Active(1));
        let mut slept = false;
        loop {
            match self.toppler.topple(cfg, self.origin, true)? {
                Effect::SleepVoid => slept = true,
                Effect::Moved(t) => return Ok((slept, Some(t))),
                Effect::Killed => return Ok((slept, None)),
                Effect::Slept => unreachable!("sleep is void during a jump-out"),
            }
        }
    }

    /// Runs iterations until the origin is empty after a weak stabilization.
    /// `before_jump_out` sees the state at the start of every jump-out.
    fn iterate(
        &mut self,
        cfg: &mut Configuration,
        trials: &mut Vec<bool>,
        mut before_jump_out: impl FnMut(&Configuration, &Self),
    ) -> Result<(), EngineError> {
        while cfg.state_at(self.origin) != SiteState::Empty {
            before_jump_out(cfg, self);
            let (slept, _) = self.jump_out(cfg)?;
            trials.push(slept);
            self.weak_stabilize(cfg)?;
        }
        Ok(())
    }
}

fn run_iterative(
    sigma: &Configuration,
    src: &StackSource,
    before_jump_out: impl FnMut(&Configuration, &Procedure<'_>),
) -> Result<ChanceRecord, EngineError> {
    let mut proc = Procedure::new(sigma, src)?;
    let mut cfg = sigma.clone();
    proc.weak_stabilize(&mut cfg)?;
    let pre_step = cfg.odometer().clone();
    let mut trials = Vec::new();
    proc.iterate(&mut cfg, &mut trials, before_jump_out)?;
    Ok(ChanceRecord::new(pre_step, cfg, trials))
}

/// Strongly stabilizes an all-active configuration with respect to the
/// origin through the iterative procedure, recording chances and trials.
pub fn strong_stabilize_iterative(
    sigma: &Configuration,
    src: &StackSource,
) -> Result<ChanceRecord, EngineError> {
    run_iterative(sigma, src, |_, _| {})
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledOutcome {
    pub origin_in_true_stab: bool,
    pub true_config: Configuration,
    pub record: ChanceRecord,
}

/// Runs true and iterative strong stabilization on the same stacks and checks
/// that they agree: if the first successful trial happens at iteration `k`,
/// the true stabilization equals the state before jump-out `k` with the origin
/// asleep and one more instruction used there; if no trial succeeds, it
/// equals the strongly stable state.
pub fn coupled_true_vs_strong(
    sigma: &Configuration,
    src: &StackSource,
) -> Result<CoupledOutcome, EngineError> {
    let mut predicted: Option<Configuration> = None;
    let record = run_iterative(sigma, src, |cfg, proc| {
        if predicted.is_none() && proc.toppler.peek(cfg, proc.origin) == Instruction::Sleep {
            let mut p = cfg.clone();
            p.set_state_at(proc.origin, SiteState::Sleeping);
            p.odometer.counts[proc.origin] += 1;
            predicted = Some(p);
        }
    })?;

    let mut true_config = sigma.clone();
    super::stabilize(&mut true_config, src, &StabilizationMode::True, OrderPolicy::Fifo)?;
    let origin_in_true_stab = true_config.origin_state() == SiteState::Sleeping;

    if origin_in_true_stab != record.any_success() {
        return Err(EngineError::CouplingViolation(format!(
            "origin occupied in true stabilization: {origin_in_true_stab}, sleep trials: {:?}",
            record.sleep_trials
        )));
    }
    let expected = predicted.as_ref().unwrap_or(&record.final_config);
    if !true_config.same_state(expected) {
        return Err(EngineError::CouplingViolation(format!(
            "true stabilization differs from the coupled prediction (first success: {:?})",
            record.first_success_iteration
        )));
    }
    Ok(CoupledOutcome {
        origin_in_true_stab,
        true_config,
        record,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FillOutcome {
    pub config: Configuration,
    /// Sites of `U` holding exactly one active particle.
    pub filled: usize,
    pub fraction: f64,
}

impl FillOutcome {
    pub fn fills_all(&self, u_len: usize) -> bool {
        self.filled == u_len
    }
}

/// Weakly stabilizes `sigma` with respect to `u` and reports how much of `u`
/// ends up filled.
pub fn fill_attempt(
    sigma: &Configuration,
    src: &StackSource,
    u: &[Site],
) -> Result<FillOutcome, EngineError> {
    let mut config = sigma.clone();
    super::stabilize(
        &mut config,
        src,
        &StabilizationMode::Weak(u.to_vec()),
        OrderPolicy::Fifo,
    )?;
    let filled = u.iter().filter(|x| config.fills(x)).count();
    let fraction = if u.is_empty() {
        1.0
    } else {
        filled as f64 / u.len() as f64
    };
    Ok(FillOutcome {
        config,
        filled,
        fraction,
    })
}

/// Record of the five-step decomposition of a strong stabilization started
/// from a configuration filling the unit ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiveStepRecord {
    /// Neighbor of the origin entered by the jump-out of step 2.
    pub x: Site,
    /// Step 3 sent a particle from `x` to the origin.
    pub jump1: bool,
    /// The single toppling of step 4 sent the particle at `x` to the origin.
    pub jump2: bool,
    /// `x` held a sleeping particle after step 1.
    pub tau1_x_sleeping: bool,
    pub ch_ge_2: bool,
    pub ch: u64,
    pub sleep_trials: Vec<bool>,
    pub final_config: Configuration,
}

/// Strong stabilization of `tau` broken into five steps:
/// 1. weakly stabilize, leaving one active particle at the origin;
/// 2. jump it out, landing on a neighbor `X`;
/// 3. if `X` now holds two active particles, topple it until one jumps;
/// 4. topple the lone particle at `X` once;
/// 5. finish the strong stabilization.
pub fn five_step_experiment(
    tau: &Configuration,
    src: &StackSource,
) -> Result<FiveStepRecord, EngineError> {
    let lattice = tau.lattice();
    if lattice.radius() == 0 || !lattice.unit_ball().iter().all(|x| tau.fills(x)) {
        return Err(EngineError::NotFillingBall);
    }
    let mut proc = Procedure::new(tau, src)?;
    let mut cfg = tau.clone();

    // Step 1.
    proc.weak_stabilize(&mut cfg)?;
    // Step 2.
    let (slept, landing) = proc.jump_out(&mut cfg)?;
    let x_index = landing.expect("the unit ball lies inside the box");
    let mut trials = vec![slept];
    // X was truly stable after step 1, so two particles means it was asleep.
    let tau1_x_sleeping = cfg.state_at(x_index) == SiteState::Active(2);
    let x = lattice.site_of(x_index);

    // Step 3.
    let mut jump1 = false;
    if tau1_x_sleeping {
        loop {
            match proc.toppler.topple(&mut cfg, x_index, false)? {
                Effect::Moved(t) => {
                    jump1 = t == proc.origin;
                    break;
                }
                Effect::Killed => break,
                Effect::SleepVoid => {}
                Effect::Slept => unreachable!("two active particles cannot fall asleep"),
            }
        }
    }
    // Step 4.
    debug_assert_eq!(cfg.state_at(x_index), SiteState::Active(1));
    let jump2 = proc.toppler.topple(&mut cfg, x_index, false)? == Effect::Moved(proc.origin);

    // Step 5: complete iteration 1, then keep iterating.
    proc.weak_stabilize(&mut cfg)?;
    proc.iterate(&mut cfg, &mut trials, |_, _| {})?;
    let ch = trials.len() as u64;
    Ok(FiveStepRecord {
        x,
        jump1,
        jump2,
        tau1_x_sleeping,
        ch_ge_2: ch >= 2,
        ch,
        sleep_trials: trials,
        final_config: cfg,
    })
}
