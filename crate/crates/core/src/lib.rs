//! Yard-sale wealth exchange with wealth-attained advantage, taxation and
//! redistribution: agent-based simulation, a Fokker-Planck solver, closed-form
//! condensation theory and parameter sweeps.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod error;
pub mod fokker_planck;
pub mod mc;
pub mod model;
pub mod record;
pub mod rng;
pub mod sweep;
pub mod theory;

pub use error::{Error, Result};
pub use model::{ModelParams, Population, RateSchedule, WealthDistribution};
pub use rng::RngStream;
