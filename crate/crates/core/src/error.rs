use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An iterate (or a derivative probe) produced NaN or an infinity.
    #[error("non-finite state produced at step {step}")]
    NonFiniteState { step: usize },

    /// An iterate left the declared domain box of the map.
    #[error("state left the domain box at step {step} (coordinate {coordinate} = {value})")]
    DomainEscape {
        step: usize,
        coordinate: usize,
        value: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The dense eigensolver hit its iteration cap.
    #[error("eigensolver did not converge within {iterations} iterations")]
    ConvergenceFailure { iterations: usize },

    /// A criterion's structural preconditions do not hold.
    #[error("criterion not applicable: {0}")]
    NotApplicable(String),

    /// The candidate's forward orbit changes the observable.
    #[error("candidate is not in the observable-invariant set (residual {residual:e})")]
    CandidateNotInXv { residual: f64 },

    #[error("invalid parameter {name} = {value}: must satisfy {range}")]
    InvalidParams {
        name: String,
        value: f64,
        range: String,
    },

    #[error("unknown model or observable: {0}")]
    Unknown(String),
}

impl Error {
    /// True for the variants that signal a numeric blow-up of the dynamics.
    pub fn is_blow_up(&self) -> bool {
        matches!(self, Error::NonFiniteState { .. } | Error::DomainEscape { .. })
    }

    /// Short machine-readable tag, used in CSV status columns.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFiniteState { .. } => "NonFiniteState",
            Error::DomainEscape { .. } => "DomainEscape",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::NotApplicable(_) => "NotApplicable",
            Error::CandidateNotInXv { .. } => "CandidateNotInXv",
            Error::InvalidParams { .. } => "InvalidParams",
            Error::Unknown(_) => "Unknown",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
