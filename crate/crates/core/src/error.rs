use thiserror::Error;

/// Everything that can go wrong while building states, evaluating
/// Svetlichny values or running sweeps.
#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a {expected}x{expected} matrix, got {rows}x{cols}")]
    DimensionMismatch {
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("not a valid density operator: {0}")]
    InvalidState(String),
    #[error("state is not X-type: {0}")]
    NotXType(String),
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("mode `{0}` listed more than once")]
    DuplicateMode(String),
    #[error("expected {expected} kept modes, got {got}")]
    WrongKeepCount { expected: usize, got: usize },
    #[error("measurement direction `{name}` has norm {norm}, expected 1")]
    NonUnitVector { name: &'static str, norm: f64 },
    #[error("Svetlichny value {0} exceeds the quantum bound 8√2")]
    OutOfRange(f64),
    #[error("mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("`{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("3·M·√Λ = {0} is not below the Nariai limit")]
    NariaiViolation(f64),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid sweep configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
