use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument: wrong dimensions, non-finite input, violated precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The reactive-bond calibration could not satisfy its targets.
    #[error("calibration failed: {message} (residuals: {residuals:?})")]
    Calibration { message: String, residuals: Vec<f64> },

    /// Propagation produced non-finite forces or energies.
    #[error("integration failed at t = {time:.6} a.u.: non-finite {term}")]
    Integration { time: f64, term: String },

    /// Transition-state search failed.
    #[error("transition-state search failed: {0}")]
    Search(String),

    /// A self-consistency check on the model failed.
    #[error("model check failed: {0}")]
    Check(String),

    /// Configuration could not be parsed or validated.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code: 1 validation, 2 runtime/numerics, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Config(_) => 1,
            Error::Calibration { .. } | Error::Integration { .. } | Error::Search(_) | Error::Check(_) => 2,
            Error::Io { .. } | Error::Csv { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
