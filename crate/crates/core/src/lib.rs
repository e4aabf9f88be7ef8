//! Simulation and analysis of regime-switching diffusions whose switching
//! rates depend on the trailing path segment.
//!
//! The crate covers the single-process simulator ([`switching`]), the coupled
//! process and its meeting/coupling times ([`coupling`]), coupling-time tails
//! and the closed-form ergodicity constants ([`ergodicity`]), and the
//! mean-field model together with its drift-condition checks ([`meanfield`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod cli;
pub mod coupling;
pub mod csvout;
pub mod ergodicity;
pub mod error;
pub mod invariants;
pub mod meanfield;
pub mod model;
pub mod segment;
pub mod switching;
pub mod validate;

pub use error::{Error, Result};
pub use model::{FrozenModel, LyapunovSpec, Model, ModelSpec, RateRow, RegimeId, SimConfig};
pub use segment::HistorySegment;
