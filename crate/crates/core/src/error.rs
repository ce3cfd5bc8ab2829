use std::path::PathBuf;

use thiserror::Error;

use crate::population::Violation;

/// Errors raised by the library.
///
/// Variants fall into three groups that the CLI maps to exit codes: input
/// problems ([`NetmixError::is_data_error`]), numerical failures
/// ([`NetmixError::is_numerical`]) and invalid arguments.
#[derive(Debug, Error)]
pub enum NetmixError {
    #[error("invalid population: {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidPopulation(Vec<Violation>),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("unknown vertex label `{label}` in {path}:{line}")]
    UnknownVertex {
        path: PathBuf,
        line: usize,
        label: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("missing value for covariate `{column}` at {path}:{line}")]
    MissingCovariate {
        path: PathBuf,
        column: String,
        line: usize,
    },

    #[error("covariate `{0}` not found")]
    UnknownCovariate(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("design matrix is rank deficient; collinear column(s): {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("all weights are zero")]
    ZeroWeights,

    #[error("degenerate component likelihoods for graph {0}: every component has zero density")]
    DegenerateLikelihood(usize),

    #[error("all {} EM start(s) failed; first failure: {}", .0.len(), .0.first().map(String::as_str).unwrap_or("none"))]
    AllStartsFailed(Vec<String>),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl NetmixError {
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            NetmixError::InvalidPopulation(_)
                | NetmixError::Parse { .. }
                | NetmixError::UnknownVertex { .. }
                | NetmixError::Dimension(_)
                | NetmixError::MissingCovariate { .. }
                | NetmixError::UnknownCovariate(_)
                | NetmixError::Io { .. }
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            NetmixError::RankDeficient(_)
                | NetmixError::ZeroWeights
                | NetmixError::DegenerateLikelihood(_)
                | NetmixError::AllStartsFailed(_)
                | NetmixError::Numerical(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NetmixError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = NetmixError> = std::result::Result<T, E>;
