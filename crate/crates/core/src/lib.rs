//! Metrical task systems with few random bits: exact optimal transport,
//! fractional strategies, a certified discretizer into `k`-barely-fractional
//! strategies, and their realization by a collective of `k` agents.

#![allow(clippy::needless_range_loop)]

pub mod adversaries;
pub mod collective;
pub mod discretizer;
mod error;
pub mod harness;
pub mod metric;
pub mod mts;
mod numeric;
pub mod strategies;
pub mod transport;

pub use error::{Error, Result};
pub use metric::MetricSpace;
pub use mts::{CostSequence, CostVector, FractionalTrace, IntegralTrajectory};
pub use numeric::lcm_u64;
pub use transport::{Coupling, MassVector};
