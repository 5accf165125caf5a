//! Error type shared across the library.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// A matrix that must be symmetric positive definite failed its
    /// factorization even after the jitter retry.
    NotSpd { context: &'static str },
    /// A matrix that must be invertible is singular to working precision.
    Singular { context: &'static str },
    /// Inconsistent dimensions between inputs.
    Dimension { context: String },
    /// An argument is outside its documented range.
    InvalidArgument { context: String },
    /// Non-finite value where a finite one is required.
    NonFinite { context: &'static str },
    /// Empty input where at least one element is required.
    Empty { context: &'static str },
    /// Flow integration failed; `step` is the 1-based pseudo-time step.
    FlowStep { step: usize, source: Box<Error> },
    /// Proposal construction failed for a (component, measurement) pairing.
    Proposal {
        component: usize,
        measurement: usize,
        source: Box<Error>,
    },
    /// Every importance weight underflowed to zero.
    DegenerateWeights,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotSpd { context } => {
                write!(f, "{context}: matrix is not symmetric positive definite")
            }
            Error::Singular { context } => write!(f, "{context}: matrix is singular"),
            Error::Dimension { context } => write!(f, "dimension mismatch: {context}"),
            Error::InvalidArgument { context } => write!(f, "invalid argument: {context}"),
            Error::NonFinite { context } => write!(f, "{context}: non-finite value"),
            Error::Empty { context } => write!(f, "{context}: empty input"),
            Error::FlowStep { step, source } => {
                write!(f, "flow failed at pseudo-time step {step}: {source}")
            }
            Error::Proposal {
                component,
                measurement,
                source,
            } => write!(
                f,
                "proposal failed for component {component}, measurement {measurement}: {source}"
            ),
            Error::DegenerateWeights => write!(f, "all importance weights underflowed"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::FlowStep { source, .. } | Error::Proposal { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub(crate) fn dimension(context: impl Into<String>) -> Self {
        Error::Dimension {
            context: context.into(),
        }
    }

    pub(crate) fn invalid(context: impl Into<String>) -> Self {
        Error::InvalidArgument {
            context: context.into(),
        }
    }
}
