use thiserror::Error;

/// Errors raised by path construction, partitioning, integration and the
/// betting protocols.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("regime error: {0}")]
    Regime(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("level {level} is below grid resolution; maximum admissible level is {max_level}")]
    Resolution { level: u32, max_level: u32 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("protocol violation at round {round}: {reason}")]
    Protocol { round: usize, reason: String },

    #[error("bound violation: {0}")]
    Bound(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable kind used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Regime(_) => "regime",
            Error::InvalidPath(_) => "invalid-path",
            Error::Config(_) => "config",
            Error::Resolution { .. } => "resolution",
            Error::Contract(_) => "contract",
            Error::Protocol { .. } => "protocol",
            Error::Bound(_) => "bound",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
