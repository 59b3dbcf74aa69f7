//! Domain types: agent populations, model parameters and wealth distributions.

mod distribution;
mod params;
mod population;
mod schedule;

pub use distribution::{Classical, GridDensity, SampleSet, WealthDistribution};
pub use params::ModelParams;
pub use population::Population;
pub use schedule::RateSchedule;
