use thiserror::Error;

/// Errors raised by the analysis and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A user-supplied value violates its contract.
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    /// The operation needs a chain shape the input does not have.
    #[error("structure error: {0}")]
    Structure(String),

    /// A state does not belong to the state space at hand.
    #[error("unknown state {0}")]
    UnknownState(String),

    /// An enumeration guard was exceeded.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    /// The query falls outside every case with a known leading-order law.
    #[error("unsupported case: {0}")]
    Unsupported(String),

    /// Target state cannot be reached, so the first-passage system is singular.
    #[error("unreachable target: {0}")]
    Unreachable(String),

    /// A closed form is numerically unreliable for this input.
    #[error("ill-conditioned: {0}")]
    Conditioning(String),

    /// A numerical self-check failed.
    #[error("numerical diagnostic: {0}")]
    Numerical(String),

    /// Reading or parsing an input file failed.
    #[error("input error: {0}")]
    Input(String),
}

impl Error {
    pub(crate) fn validation(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            field,
            reason: reason.into(),
        }
    }

    /// Process exit code for this error: 2 for capacity errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Capacity(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
