use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure mode of the library. [`Error::code`] gives the stable,
/// machine-readable name used by the CLI.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("pushforward produced a non-finite image at atom {atom}")]
    NonFiniteImage { atom: usize },
    #[error("cannot mix discrete and gaussian representations")]
    MixedRepresentation,
    #[error("transport map is not invertible: images {first} and {second} coincide")]
    NonInvertible { first: usize, second: usize },
    #[error("interpolation parameter {0} outside [0, 1]")]
    TOutOfRange(f64),
    #[error("functional does not accept this representation: {0}")]
    IncompatibleRepresentation(String),
    #[error("optimal plan splits mass; no deterministic transport map")]
    NondeterministicMap,
    #[error("standard deviation of <w, x> vanishes")]
    ZeroStd,
    #[error("step {step} too large for test field with Lipschitz estimate {lipschitz}")]
    StepTooLarge { step: f64, lipschitz: f64 },
    #[error("constraint gradient vanishes (norm {0:e})")]
    DegenerateConstraintGradient(f64),
    #[error("flow diverged at iteration {iter}")]
    NonFiniteIterate { iter: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("no admissible quartic root above {threshold}")]
    NoValidRoot { threshold: f64 },
    #[error("{count} distinct admissible quartic roots above {threshold}")]
    MultipleValidRoots { count: usize, threshold: f64 },
    #[error("no convergence: {reason} (best matrix residual {matrix_residual:e}, best distance residual {distance_residual:e})")]
    NoConvergence {
        reason: String,
        matrix_residual: f64,
        distance_residual: f64,
    },
    #[error("dual multiplier must be positive, got {0}")]
    NonpositiveLambda(f64),
    #[error("instance too large for oracle: {0}")]
    TooLarge(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidMeasure(_) => "InvalidMeasure",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonFiniteImage { .. } => "NonFiniteImage",
            Error::MixedRepresentation => "MixedRepresentation",
            Error::NonInvertible { .. } => "NonInvertible",
            Error::TOutOfRange(_) => "TOutOfRange",
            Error::IncompatibleRepresentation(_) => "IncompatibleRepresentation",
            Error::NondeterministicMap => "NondeterministicMap",
            Error::ZeroStd => "ZeroStd",
            Error::StepTooLarge { .. } => "StepTooLarge",
            Error::DegenerateConstraintGradient(_) => "DegenerateConstraintGradient",
            Error::NonFiniteIterate { .. } => "NonFiniteIterate",
            Error::InvalidInstance(_) => "InvalidInstance",
            Error::NoValidRoot { .. } => "NoValidRoot",
            Error::MultipleValidRoots { .. } => "MultipleValidRoots",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::NonpositiveLambda(_) => "NonpositiveLambda",
            Error::TooLarge(_) => "TooLarge",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }
}
