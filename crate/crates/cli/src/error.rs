use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("node {k} failed: {source}")]
    Node {
        k: usize,
        #[source]
        source: lsing::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) | CliError::Io { .. } => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Node { source, .. } => classify(source),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

fn classify(e: &lsing::Error) -> i32 {
    use lsing::Error as E;
    match e {
        E::Diverged { .. } | E::AllDiverged { .. } | E::NonConvergence { .. } | E::NotPositiveDefinite(_) => {
            EXIT_NUMERICAL
        }
        E::InvalidArgument(_) => EXIT_CONFIG,
        E::DimensionMismatch { .. }
        | E::InvalidIndex { .. }
        | E::EmptyBatch
        | E::InsufficientRows { .. }
        | E::ConstantColumn { .. } => EXIT_DATA,
    }
}

impl From<lsing::Error> for CliError {
    fn from(e: lsing::Error) -> Self {
        match classify(&e) {
            EXIT_NUMERICAL => CliError::Numerical(e.to_string()),
            EXIT_CONFIG => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
