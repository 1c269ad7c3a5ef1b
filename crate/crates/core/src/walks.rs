//! Returns to the origin of simple random walk on `Z^d`.
//!
//! A walk is stopped when it leaves the L∞ box of radius `escape_radius`
//! (mirroring boundary killing in the engine) or after `max_steps` steps, in
//! which case the sample is censored.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, streams, SplitMix64};

pub const DEFAULT_ESCAPE_RADIUS: u64 = 1_000;
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;
/// Censoring rate above which a mean is withheld unless explicitly allowed.
pub const CENSORING_THRESHOLD: f64 = 1e-3;
/// Tail counts `#{R >= k}` are kept for `k = 1..=TAIL_LEN`.
pub const TAIL_LEN: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WalksError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("escape radius must be at least 1")]
    ZeroRadius,
    #[error("at least one walk is required")]
    NoTrials,
    #[error("{censored} of {trials} walks hit max_steps (rate {rate:.2e} > {CENSORING_THRESHOLD:e}); raise max_steps or allow censoring")]
    Censored { censored: u64, trials: u64, rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnsSample {
    pub returns: u64,
    pub steps_used: u64,
    pub escaped: bool,
    /// Stopped by `max_steps` before escaping.
    pub censored: bool,
}

/// Runs one walk from the origin.
pub fn simulate_returns(d: usize, seed: u64, escape_radius: u64, max_steps: u64) -> ReturnsSample {
    assert!(d >= 1 && escape_radius >= 1);
    let mut rng = SplitMix64::new(seed);
    let mut pos = vec![0i64; d];
    let radius = escape_radius as i64;
    let degree = 2 * d as u32;
    let mut nonzero = 0usize;
    let mut returns = 0;
    let mut steps = 0;
    while steps < max_steps {
        let dir = rng.below(degree) as usize;
        steps += 1;
        let c = &mut pos[dir >> 1];
        let was_zero = *c == 0;
        *c += if dir & 1 == 0 { -1 } else { 1 };
        if c.abs() >= radius {
            return ReturnsSample {
                returns,
                steps_used: steps,
                escaped: true,
                censored: false,
            };
        }
        if was_zero {
            nonzero += 1;
        } else if *c == 0 {
            nonzero -= 1;
            if nonzero == 0 {
                returns += 1;
            }
        }
    }
    ReturnsSample {
        returns,
        steps_used: steps,
        escaped: false,
        censored: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnsEstimate {
    pub d: usize,
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
    pub censoring_rate: f64,
    pub escape_radius: u64,
    pub max_steps: u64,
    pub master_seed: u64,
    /// Recurrent dimension or heavy censoring: the true mean is infinite and
    /// `mean` only describes the truncated walk.
    pub divergent: bool,
    /// `tail[k - 1] = #{walks with R >= k}`.
    pub tail: Vec<u64>,
    pub mean_steps: f64,
}

impl ReturnsEstimate {
    /// Estimated `P(R >= k)` for `k >= 1`.
    pub fn tail_probability(&self, k: usize) -> f64 {
        self.tail[k - 1] as f64 / self.trials as f64
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    n: u64,
    sum: u128,
    sum_sq: u128,
    censored: u64,
    steps: u128,
    tail: [u64; TAIL_LEN],
}

impl Acc {
    fn push(mut self, s: ReturnsSample) -> Self {
        self.n += 1;
        self.sum += s.returns as u128;
        self.sum_sq += (s.returns as u128) * (s.returns as u128);
        self.censored += s.censored as u64;
        self.steps += s.steps_used as u128;
        for k in 1..=TAIL_LEN.min(s.returns as usize) {
            self.tail[k - 1] += 1;
        }
        self
    }

    fn merge(mut self, o: Acc) -> Self {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.censored += o.censored;
        self.steps += o.steps;
        for (a, b) in self.tail.iter_mut().zip(o.tail) {
            *a += b;
        }
        self
    }
}

/// Mean number of returns over `trials` walks. Walk `i` uses seed
/// `derive_seed(master_seed, WALKS, i)`; all accumulators are integers, so the
/// result does not depend on scheduling.
pub fn expected_returns(
    d: usize,
    trials: u64,
    escape_radius: u64,
    max_steps: u64,
    master_seed: u64,
    allow_censoring: bool,
) -> Result<ReturnsEstimate, WalksError> {
    if d == 0 {
        return Err(WalksError::ZeroDimension);
    }
    if escape_radius == 0 {
        return Err(WalksError::ZeroRadius);
    }
    if trials == 0 {
        return Err(WalksError::NoTrials);
    }
    let acc = (0..trials)
        .into_par_iter()
        .fold(Acc::default, |acc, i| {
            let seed = derive_seed(master_seed, streams::WALKS, i);
            acc.push(simulate_returns(d, seed, escape_radius, max_steps))
        })
        .reduce(Acc::default, Acc::merge);
    let n = acc.n as f64;
    let mean = acc.sum as f64 / n;
    let var = if acc.n > 1 {
        ((acc.sum_sq as f64 - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    let censoring_rate = acc.censored as f64 / n;
    let recurrent = d <= 2;
    if !recurrent && censoring_rate > CENSORING_THRESHOLD && !allow_censoring {
        return Err(WalksError::Censored {
            censored: acc.censored,
            trials,
            rate: censoring_rate,
        });
    }
    Ok(ReturnsEstimate {
        d,
        mean,
        std_error: (var / n).sqrt(),
        trials,
        censoring_rate,
        escape_radius,
        max_steps,
        master_seed,
        divergent: recurrent || censoring_rate > CENSORING_THRESHOLD,
        tail: acc.tail.to_vec(),
        mean_steps: acc.steps as f64 / n,
    })
}

/// Leading-order surrogate `1 / (2d)` for `E[R(Z^d)]`.
pub fn returns_asymptotic(d: usize) -> f64 {
    1.0 / (2.0 * d as f64)
}
