//! Activated random walk on finite boxes of `Z^d`.
//!
//! - [`lattice`]: box geometry and dense site indexing.
//! - [`stacks`]: the instruction oracle, a pure function of `(seed, site, k)`.
//! - [`engine`]: toppling, true/weak/strong stabilization, chance counting.
//! - [`walks`]: simple random walk return counts.
//! - [`estimators`]: Monte Carlo estimators and verification reports.
//! - [`verify`]: named check suites used by the CLI.

pub mod engine;
pub mod estimators;
pub mod lattice;
pub mod rng;
pub mod stacks;
pub mod verify;
pub mod walks;

pub use engine::{Configuration, EngineError, Odometer, SiteState, StabilizationMode};
pub use lattice::{make_box, LatticeBox, Site};
pub use stacks::{Instruction, Params, StackSource};
