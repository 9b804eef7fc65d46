//! Sequential Monte Carlo sampling of redistricting plans.
//!
//! Plans are partitions of a map graph into connected, population-balanced
//! regions. The sampler targets distributions weighted by spanning-tree
//! counts and works in three state spaces: plain partitions, spanning
//! forests, and forests joined by linking edges.

pub mod diagnostics;
pub mod enumerate;
pub mod error;
pub mod graph;
pub mod hierarchy;
pub mod io;
pub mod kernels;
pub mod mcmc;
pub mod particle;
pub mod problem;
pub mod rng;
pub mod scheme;
pub mod smc;
pub mod target;
pub mod trees;
pub mod weights;

pub use error::{Error, Result};
