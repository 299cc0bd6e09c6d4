use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error in {context}: {message}")]
    Schema { context: String, message: String },
    #[error("parse error in {context} at line {line}: {message}")]
    Parse {
        context: String,
        line: u64,
        message: String,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error(
        "solver did not converge after {iterations} iterations \
         (objective {objective:.6e}, max KKT violation {violation:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        objective: f64,
        violation: f64,
    },
    #[error("bandwidth calibration failed: {0}")]
    Calibration(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("bad model file format: expected magic tag {expected:?}")]
    Format { expected: String },
    #[error("model file version {found} is newer than supported version {supported}")]
    Version { found: u32, supported: u32 },
    #[error("corrupt model file: {0}")]
    Corruption(String),
    #[error("pipeline error: {0}")]
    Pipeline(String),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
