use thiserror::Error;

use crate::model::Population;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// Every violated constraint, collected before any computation starts.
    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    #[error("time step {requested} exceeds the stability bound {admissible}")]
    Stability { requested: f64, admissible: f64 },

    #[error(
        "integrator could not meet tolerance {requested:e} (achieved {achieved:e}) at t = {time}"
    )]
    Tolerance {
        requested: f64,
        achieved: f64,
        time: f64,
    },

    #[error("density went negative ({min_density:e}) at t = {time}")]
    Instability { time: f64, min_density: f64 },

    #[error("observer failed at t = {}: {message}", .last_state.time)]
    Observer {
        message: String,
        last_state: Box<Population>,
    },

    #[error("schema version mismatch: found {found}, expected {expected}")]
    Schema { found: String, expected: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
