use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SbnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SbnError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("index {index} out of range for {context} of size {len}")]
    Index {
        context: &'static str,
        index: usize,
        len: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    /// Exact enumeration was requested on a layer wider than the configured cap.
    #[error("layer {layer} has {width} units, exceeding the enumeration cap of {cap}")]
    Capacity { layer: usize, width: usize, cap: usize },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("training diverged at epoch {epoch} (non-finite values in {block})")]
    Divergence { epoch: usize, block: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SbnError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SbnError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        SbnError::Parse {
            line,
            message: message.into(),
        }
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(SbnError::Shape {
            context,
            expected,
            got,
        });
    }
    Ok(())
}
