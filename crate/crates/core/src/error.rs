use thiserror::Error;

/// Errors raised by sampling, estimation and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("radius {epsilon} exceeds the admissible radius {limit}")]
    RadiusTooLarge { epsilon: f64, limit: f64 },

    #[error("point lies outside the domain or its {epsilon}-interior")]
    OutsideDomain { epsilon: f64 },

    #[error("rejection sampler exhausted its budget of {attempts} attempts")]
    RejectionBudgetExhausted { attempts: usize },

    #[error("density value {value} exceeds the declared bound {bound}")]
    DensityBoundViolated { value: f64, bound: f64 },

    #[error("center {center} has no neighbors")]
    EmptyNeighborhood { center: usize },

    #[error("neighbor coincides with its center")]
    ZeroDisplacement,

    #[error("no center has at least {n_min} neighbors")]
    NoQualifyingCenters { n_min: usize },

    #[error("target function has no analytic {0}")]
    MissingOracle(&'static str),

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("basis is not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("malformed CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
