use thiserror::Error;

/// Errors produced by the estimation pipeline, the simulator and the file formats.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("alignment failed: {0}")]
    AlignmentFailed(String),

    #[error("simulation domain error: {0}")]
    SimulationDomain(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for failures of the estimation/simulation domain, as opposed to
    /// malformed input or I/O problems.
    pub fn is_domain_failure(&self) -> bool {
        matches!(
            self,
            Error::DegenerateGeometry(_)
                | Error::EstimationFailed(_)
                | Error::AlignmentFailed(_)
                | Error::SimulationDomain(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
