use thiserror::Error;

use crate::maxlike::TomographyResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown outcome `{outcome}` at step {step}")]
    UnknownOutcome { step: usize, outcome: String },

    #[error("step {step} is outside the family (length {len})")]
    StepOutOfRange { step: usize, len: usize },

    #[error("operator is not an orthogonal projector (residual {0:e})")]
    NotProjector(f64),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("Kraus family is not trace preserving at step {step} (deviation {deviation:e})")]
    NotTracePreserving { step: usize, deviation: f64 },

    #[error("zero probability at step {step}{}", trajectory.map(|id| format!(" of trajectory {id}")).unwrap_or_default())]
    ZeroProbability { step: usize, trajectory: Option<u64> },

    #[error("tr(rho E) <= 0 for effect {index}")]
    DegenerateTrace { index: usize },

    #[error("likelihood is flat: every effect is proportional to the identity")]
    DegenerateLikelihood,

    #[error("optimizer stopped after {} iterations without certification (KKT residual {:e})", .0.iterations, .0.kkt_residual)]
    MaxIterations(Box<TomographyResult>),

    #[error("observable is unidentifiable: relative null-space component {0:e}")]
    Unidentifiable(f64),

    #[error("effective sample size {0:.1} is below 100")]
    EffectiveSampleSizeTooLow(f64),

    #[error("step size too large at step {step}: trace change {change:e}")]
    StepSizeTooLarge { step: usize, change: f64 },

    #[error("positivity lost at step {step}: minimum eigenvalue {min_eigenvalue:e}")]
    PositivityLost { step: usize, min_eigenvalue: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) | Error::Json(_) => 2,
            Error::DimensionMismatch { .. }
            | Error::UnknownOutcome { .. }
            | Error::StepOutOfRange { .. }
            | Error::InvalidState(_)
            | Error::NotTracePreserving { .. }
            | Error::InvalidParameter(_)
            | Error::Config(_) => 1,
            _ => 3,
        }
    }
}
