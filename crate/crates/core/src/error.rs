use thiserror::Error;

/// Errors raised by the measure, transport and experiment routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("negative weight {weight} at atom {index}")]
    NegativeWeight { index: usize, weight: f64 },
    #[error("weights sum to {sum}, expected 1 within {tolerance}")]
    NotNormalized { sum: f64, tolerance: f64 },
    #[error("measure has empty support")]
    EmptySupport,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("sample size must be at least 1")]
    InvalidSampleSize,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid of {size} points exceeds the support cap {cap}")]
    GridTooLarge { size: usize, cap: usize },
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("transport problem with {entries} cost entries exceeds the cap {cap}")]
    SizeCapExceeded { entries: usize, cap: usize },
    #[error("length mismatch: function has {found} values, support has {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("entropy functional requires a nonnegative function")]
    NegativeInput,
    #[error("neighbor graph is disconnected")]
    DisconnectedGraph,
    #[error("threshold {t} is infeasible: the discrepancy never exceeds {max} on the simplex")]
    Infeasible { t: f64, max: f64 },
    #[error("support of size {size} exceeds the oracle limit {max}")]
    SupportTooLarge { size: usize, max: usize },
    #[error("enumeration of {size} outcomes exceeds the cap {cap}")]
    EnumerationCapExceeded { size: u128, cap: u128 },
    #[error("event has zero probability under the tilted measure")]
    EventEmpty,
    #[error("measure is not absolutely continuous with respect to the reference")]
    NotAbsolutelyContinuous,
    #[error("cannot parse cost spec `{input}`: expected one of `quadratic`, `power:p=<f>`, `alpha:p=<f>`, `sg`")]
    ParseCost { input: String },
    #[error("solver did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed measure file: {0}")]
    MalformedFile(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
