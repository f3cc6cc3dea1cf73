//! Simulation laboratory for minimum-norm linear regression on long-tail
//! sparse feature data.

pub mod datagen;
pub mod diagnostics;
pub mod distribution;
pub mod evaluation;
pub mod formats;
pub mod harness;
pub mod rng;
pub mod solver;
