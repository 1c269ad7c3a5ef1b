//! Toppling and stabilization on a finite box with boundary killing.
//!
//! A [`Configuration`] holds the particle state of every site of a box, the
//! odometer, and the number of particles killed at the boundary. Stabilization
//! comes in three flavors ([`StabilizationMode`]): true, weak and strong with
//! respect to a set `U`. On top of that sit the iterative chance-counting
//! procedure, the five-step experiment around the unit ball, the fill
//! operation, and replay harnesses for the abelian property and the least
//! action principle.

mod chances;
mod replay;
mod snapshot;
mod stabilize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{LatticeBox, LatticeError, Site};

pub use chances::{
    coupled_true_vs_strong, fill_attempt, five_step_experiment, strong_stabilize_iterative,
    ChanceRecord, CoupledOutcome, FillOutcome, FiveStepRecord,
};
pub use replay::{
    abelian_replay, least_action_replay, random_acceptable_stabilization, AbelianReport,
    DominationReport,
};
pub use snapshot::{Snapshot, SnapshotError};
pub use stabilize::{
    is_stable, stabilize, stabilize_with_limit, stabilized, topple, OrderPolicy, StabilizationMode,
    StabilizeStats, STEP_CEILING,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("site {0} is empty and cannot be toppled")]
    EmptySite(Site),
    #[error("site {0} holds a sleeping particle; only an acceptable toppling may wake it")]
    SleepingSite(Site),
    #[error("site {0} lies outside the box")]
    OutsideBox(Site),
    #[error("stabilization consumed more than {limit} instructions, which signals an engine defect")]
    StepLimit { limit: u64 },
    #[error("iterative strong stabilization requires an all-active configuration")]
    SleepingInput,
    #[error("configuration does not place exactly one active particle on the origin and each of its neighbors")]
    NotFillingBall,
    #[error("stack parameters have dimension {params}, box has dimension {lattice}")]
    DimensionMismatch { params: usize, lattice: usize },
    #[error("true/strong coupling violated: {0}")]
    CouplingViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SiteState {
    Empty,
    /// Exactly one sleeping particle.
    Sleeping,
    /// `count >= 1` active particles.
    Active(u32),
}

impl SiteState {
    pub fn particles(self) -> u64 {
        match self {
            SiteState::Empty => 0,
            SiteState::Sleeping => 1,
            SiteState::Active(c) => c as u64,
        }
    }

    /// Integer code used by snapshots: 0 empty, -1 sleeping, `k` for `k` active.
    pub fn code(self) -> i64 {
        match self {
            SiteState::Empty => 0,
            SiteState::Sleeping => -1,
            SiteState::Active(c) => c as i64,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            0 => Some(SiteState::Empty),
            -1 => Some(SiteState::Sleeping),
            c if c > 0 && c <= u32::MAX as i64 => Some(SiteState::Active(c as u32)),
            _ => None,
        }
    }

    /// Adds one active particle, waking a sleeper.
    #[inline]
    fn with_arrival(self) -> Self {
        match self {
            SiteState::Empty => SiteState::Active(1),
            SiteState::Sleeping => SiteState::Active(2),
            SiteState::Active(c) => SiteState::Active(c + 1),
        }
    }
}

/// Per-site instruction counts on a box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Odometer {
    lattice: LatticeBox,
    counts: Vec<u64>,
}

impl Odometer {
    pub fn zeros(lattice: LatticeBox) -> Self {
        let counts = vec![0; lattice.volume()];
        Odometer { lattice, counts }
    }

    pub fn lattice(&self) -> &LatticeBox {
        &self.lattice
    }

    /// `None` for sites outside the box.
    pub fn get(&self, x: &Site) -> Option<u64> {
        self.lattice.index_of(x).map(|i| self.counts[i])
    }

    pub fn set(&mut self, x: &Site, value: u64) -> bool {
        match self.lattice.index_of(x) {
            Some(i) => {
                self.counts[i] = value;
                true
            }
            None => false,
        }
    }

    pub fn at(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Pointwise `self >= other` on the sites of `other`'s box. Sites of
    /// `other` missing from `self` count as zero.
    pub fn dominates(&self, other: &Odometer) -> bool {
        if self.lattice == other.lattice {
            return self.counts.iter().zip(&other.counts).all(|(a, b)| a >= b);
        }
        other
            .lattice
            .sites()
            .zip(&other.counts)
            .all(|(x, &b)| self.get(&x).unwrap_or(0) >= b)
    }
}

/// Particle configuration on a box together with its odometer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    lattice: LatticeBox,
    states: Vec<SiteState>,
    odometer: Odometer,
    killed: u64,
}

impl Configuration {
    pub fn empty(lattice: LatticeBox) -> Self {
        let states = vec![SiteState::Empty; lattice.volume()];
        let odometer = Odometer::zeros(lattice.clone());
        Configuration {
            lattice,
            states,
            odometer,
            killed: 0,
        }
    }

    /// One active particle at the origin.
    pub fn delta_origin(lattice: LatticeBox) -> Self {
        let mut cfg = Configuration::empty(lattice);
        let o = cfg.lattice.origin_index();
        cfg.states[o] = SiteState::Active(1);
        cfg
    }

    /// Builds a configuration from dense-order states and a zero odometer.
    pub fn from_states(lattice: LatticeBox, states: Vec<SiteState>) -> Result<Self, EngineError> {
        if states.len() != lattice.volume() {
            return Err(EngineError::Lattice(LatticeError::DimensionMismatch {
                expected: lattice.volume(),
                got: states.len(),
            }));
        }
        let odometer = Odometer::zeros(lattice.clone());
        Ok(Configuration {
            lattice,
            states,
            odometer,
            killed: 0,
        })
    }

    pub fn lattice(&self) -> &LatticeBox {
        &self.lattice
    }

    pub fn states(&self) -> &[SiteState] {
        &self.states
    }

    pub fn state(&self, x: &Site) -> Option<SiteState> {
        self.lattice.index_of(x).map(|i| self.states[i])
    }

    pub fn state_at(&self, index: usize) -> SiteState {
        self.states[index]
    }

    pub fn origin_state(&self) -> SiteState {
        self.states[self.lattice.origin_index()]
    }

    pub fn set_state(&mut self, x: &Site, state: SiteState) -> Result<(), EngineError> {
        self.lattice.check_site(x)?;
        let i = self
            .lattice
            .index_of(x)
            .ok_or_else(|| EngineError::OutsideBox(x.clone()))?;
        self.states[i] = state;
        Ok(())
    }

    pub(crate) fn set_state_at(&mut self, index: usize, state: SiteState) {
        self.states[index] = state;
    }

    /// Adds `count` active particles at `x`; a sleeper there wakes up.
    pub fn add_active(&mut self, x: &Site, count: u32) -> Result<(), EngineError> {
        self.lattice.check_site(x)?;
        let i = self
            .lattice
            .index_of(x)
            .ok_or_else(|| EngineError::OutsideBox(x.clone()))?;
        for _ in 0..count {
            self.states[i] = self.states[i].with_arrival();
        }
        Ok(())
    }

    pub fn odometer(&self) -> &Odometer {
        &self.odometer
    }

    pub fn set_odometer(&mut self, odometer: Odometer) -> Result<(), EngineError> {
        if odometer.lattice != self.lattice {
            return Err(EngineError::Lattice(LatticeError::DimensionMismatch {
                expected: self.lattice.volume(),
                got: odometer.lattice.volume(),
            }));
        }
        self.odometer = odometer;
        Ok(())
    }

    /// Particles killed at the boundary so far.
    pub fn killed(&self) -> u64 {
        self.killed
    }

    pub fn particles(&self) -> u64 {
        self.states.iter().map(|s| s.particles()).sum()
    }

    pub fn sleeping_count(&self) -> usize {
        self.states
            .iter()
            .filter(|&&s| s == SiteState::Sleeping)
            .count()
    }

    pub fn is_all_active(&self) -> bool {
        !self.states.contains(&SiteState::Sleeping)
    }

    /// True when the configuration fills `x`, i.e. holds exactly one active
    /// particle there.
    pub fn fills(&self, x: &Site) -> bool {
        self.state(x) == Some(SiteState::Active(1))
    }

    /// Same particle states and odometer, ignoring the kill counter.
    pub fn same_state(&self, other: &Configuration) -> bool {
        self.lattice == other.lattice
            && self.states == other.states
            && self.odometer == other.odometer
    }
}
