use thiserror::Error;

use crate::plant::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid plant parameters: {0}")]
    InvalidPlant(String),

    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid controller configuration: {0}")]
    InvalidController(String),

    #[error("invalid simulation configuration: {0}")]
    InvalidSimConfig(String),

    #[error("uncertainty sampler could not satisfy plant invariants after {attempts} attempts (sample {index})")]
    ResampleCapExceeded { index: usize, attempts: usize },

    #[error("scenario violates its declared bounds ({} violations)", .0.len())]
    Validation(Vec<Violation>),

    #[error("simulation diverged at t = {t} s (x1 = {x1}, x2 = {x2})")]
    Divergence { t: f64, x1: f64, x2: f64 },

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("sweep would launch {runs} runs, cap is {cap}")]
    CapExceeded { runs: usize, cap: usize },

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("surface requires a 2-axis sweep, got {0} axes")]
    NotTwoAxis(usize),

    #[error("json path `{path}`: {reason}")]
    JsonPath { path: String, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
