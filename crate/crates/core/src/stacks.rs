//! Instruction stacks of the site-wise representation.
//!
//! A [`StackSource`] never stores a stack. Instruction `k` at site `x` is a
//! pure function of `(seed, x, k)`: the site's coordinates are hashed into a
//! stream key, and the instruction is decoded from SplitMix64 output `k` of
//! that stream. Because stacks are keyed by coordinates rather than by a
//! box-relative index, the same site carries the same stack in every box,
//! and no toppling order can change which instruction sits at position `k`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{opposite, Site};
use crate::rng::{mix64, GOLDEN};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("sleep rate must satisfy λ > 0 and be finite, got {0}")]
    BadLambda(f64),
}

/// Dimension and sleep rate, with the derived sleep and jump probabilities
/// `p_s = λ / (1 + λ)` and `p_j = 1 - p_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    d: usize,
    lambda: f64,
    p_s: f64,
    p_j: f64,
}

impl Params {
    pub fn new(d: usize, lambda: f64) -> Result<Self, ParamsError> {
        if d == 0 {
            return Err(ParamsError::ZeroDimension);
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(ParamsError::BadLambda(lambda));
        }
        let p_s = lambda / (1.0 + lambda);
        Ok(Params {
            d,
            lambda,
            p_s,
            p_j: 1.0 - p_s,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn p_sleep(&self) -> f64 {
        self.p_s
    }

    pub fn p_jump(&self) -> f64 {
        self.p_j
    }

    /// Number of jump directions, `2d`.
    pub fn degree(&self) -> usize {
        2 * self.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Instruction {
    Sleep,
    /// Jump along direction `j < 2d` of the fixed neighbor order.
    Jump(usize),
}

#[derive(Debug, Clone)]
pub struct StackSource {
    seed: u64,
    params: Params,
    slice: f64,
}

impl StackSource {
    pub fn new(seed: u64, params: Params) -> Self {
        StackSource {
            seed,
            params,
            slice: params.p_j / params.degree() as f64,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Stream key of site `x`. Depends on the seed and the coordinates only.
    pub fn site_key(&self, x: &Site) -> u64 {
        let mut h = mix64(self.seed ^ 0x5851_F42D_4C95_7F2D);
        for &c in x.coords() {
            let zigzag = ((c << 1) ^ (c >> 63)) as u64;
            h = mix64(h.wrapping_add(GOLDEN) ^ zigzag);
        }
        h
    }

    /// Instruction `k` of the stack at site `x`.
    pub fn instruction(&self, x: &Site, k: u64) -> Instruction {
        self.instruction_keyed(self.site_key(x), k)
    }

    /// Instruction `k` of the stack with stream key `key` (see [`site_key`]).
    ///
    /// [`site_key`]: StackSource::site_key
    #[inline]
    pub fn instruction_keyed(&self, key: u64, k: u64) -> Instruction {
        let bits = mix64(key.wrapping_add(k.wrapping_add(1).wrapping_mul(GOLDEN)));
        self.decode((bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64))
    }

    /// `[0, p_s)` is Sleep, followed by `2d` slices of width `p_j / 2d`.
    #[inline]
    fn decode(&self, u: f64) -> Instruction {
        if u < self.params.p_s {
            Instruction::Sleep
        } else {
            let j = ((u - self.params.p_s) / self.slice) as usize;
            Instruction::Jump(j.min(self.params.degree() - 1))
        }
    }

    /// Number of jump instructions into `target` consumed under `odometer`:
    /// pairs `(y, l)` with `y ~ target`, `l < m(y)` and instruction `l` at `y`
    /// pointing at `target`. Neighbors outside the odometer's box have
    /// consumed nothing and contribute zero.
    pub fn jump_count_into(&self, target: &Site, odometer: &crate::engine::Odometer) -> u64 {
        let mut count = 0;
        for dir in 0..2 * target.dim() {
            let y = target.step(dir);
            let Some(m) = odometer.get(&y) else { continue };
            let toward = Instruction::Jump(opposite(dir));
            let key = self.site_key(&y);
            count += (0..m)
                .filter(|&l| self.instruction_keyed(key, l) == toward)
                .count() as u64;
        }
        count
    }
}
