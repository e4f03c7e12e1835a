use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file did not conform to its schema.
    #[error("{file}{}: field `{field}`: {message}", line.map(|l| format!(":{l}")).unwrap_or_default())]
    Schema {
        file: String,
        line: Option<usize>,
        field: String,
        message: String,
    },

    #[error("{kind} `{id}` referenced by {referenced_by} does not exist")]
    DanglingReference {
        kind: &'static str,
        id: String,
        referenced_by: String,
    },

    #[error("network is not connected: {0}")]
    DisconnectedNetwork(String),

    #[error("season day counts sum to {0}, expected 365")]
    SeasonDays(u32),

    #[error("invalid data: {0}")]
    Invalid(String),

    #[error("singular network topology: {0}")]
    SingularTopology(String),

    #[error("power flow did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("catalog offers no technology options")]
    EmptyCatalog,

    #[error("design rejected: {0}")]
    DesignRejected(String),

    #[error("{combinations} design combinations exceed the enumeration cap of {cap}")]
    EnumerationCap { combinations: u128, cap: usize },

    #[error("report error: {0}")]
    Report(String),
}

impl Error {
    pub(crate) fn schema(
        file: impl Into<String>,
        line: Option<usize>,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Schema {
            file: file.into(),
            line,
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
