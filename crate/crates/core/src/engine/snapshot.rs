//! Compact JSON form of a configuration.
//!
//! States are run-length encoded in dense box order as `[run, code]` pairs,
//! with codes 0 (empty), -1 (sleeping) and `k > 0` (`k` active particles).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Configuration, EngineError, Odometer, SiteState};
use crate::lattice::{make_box, LatticeError};

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("invalid state code {0}")]
    BadCode(i64),
    #[error("runs cover {got} sites, box has {expected}")]
    Length { expected: usize, got: u64 },
    #[error("odometer has {got} entries, box has {expected}")]
    OdometerLength { expected: usize, got: usize },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub d: usize,
    pub n: usize,
    /// Stack seed the configuration was produced with, if any.
    #[serde(default)]
    pub seed: Option<u64>,
    pub states: Vec<(u64, i64)>,
    /// Dense-order odometer; empty means all zero.
    #[serde(default)]
    pub odometer: Vec<u64>,
    #[serde(default)]
    pub killed: u64,
}

impl Snapshot {
    pub fn from_configuration(cfg: &Configuration, seed: Option<u64>) -> Self {
        let mut states: Vec<(u64, i64)> = Vec::new();
        for s in cfg.states() {
            let code = s.code();
            match states.last_mut() {
                Some((run, c)) if *c == code => *run += 1,
                _ => states.push((1, code)),
            }
        }
        let odometer = if cfg.odometer().total() == 0 {
            Vec::new()
        } else {
            cfg.odometer().as_slice().to_vec()
        };
        Snapshot {
            d: cfg.lattice().dim(),
            n: cfg.lattice().radius(),
            seed,
            states,
            odometer,
            killed: cfg.killed(),
        }
    }

    pub fn to_configuration(&self) -> Result<Configuration, SnapshotError> {
        let lattice = make_box(self.d, self.n)?;
        let volume = lattice.volume();
        let covered: u64 = self.states.iter().map(|&(r, _)| r).sum();
        if covered != volume as u64 {
            return Err(SnapshotError::Length {
                expected: volume,
                got: covered,
            });
        }
        let mut states = Vec::with_capacity(volume);
        for &(run, code) in &self.states {
            let s = SiteState::from_code(code).ok_or(SnapshotError::BadCode(code))?;
            states.extend(std::iter::repeat_n(s, run as usize));
        }
        let mut cfg = Configuration::from_states(lattice.clone(), states)?;
        if !self.odometer.is_empty() {
            if self.odometer.len() != volume {
                return Err(SnapshotError::OdometerLength {
                    expected: volume,
                    got: self.odometer.len(),
                });
            }
            let mut m = Odometer::zeros(lattice);
            m.counts.copy_from_slice(&self.odometer);
            cfg.set_odometer(m)?;
        }
        cfg.killed = self.killed;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("snapshot serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, SnapshotError> {
        Ok(serde_json::from_str(text)?)
    }
}
