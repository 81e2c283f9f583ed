use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the energy-management toolkit.
#[derive(Debug, Error)]
pub enum EmsError {
    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested terminal power exceeds what the source can deliver.
    #[error("infeasible power {power} W: maximum deliverable is {max} W")]
    InfeasiblePower { power: f64, max: f64 },

    /// Every control is infeasible from the initial state.
    #[error("infeasible problem: {0}")]
    InfeasibleProblem(String),

    /// A forward simulation could not find a feasible control.
    #[error("infeasible control at step {step}: {reason}")]
    InfeasibleStep { step: usize, reason: String },

    /// The oracle refuses instances whose enumeration is too large.
    #[error("instance too large for exhaustive search: {sequences} sequences (limit {limit})")]
    TooLarge { sequences: f64, limit: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    TrainingDiverged { epoch: usize, loss: f64 },

    #[error("invalid configuration `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl EmsError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        EmsError::Domain(msg.into())
    }

    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        EmsError::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EmsError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = EmsError> = std::result::Result<T, E>;
