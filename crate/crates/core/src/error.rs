use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("bounding box out of bounds: {axis} extent {end} exceeds frame {axis} {limit}")]
    Bounds {
        axis: &'static str,
        end: usize,
        limit: usize,
    },

    #[error("shape mismatch at {layer}: expected {expected:?}, got {actual:?}")]
    Shape {
        layer: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("flow failed on frame pair {pair}: {source}")]
    FlowPair {
        pair: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid label {0}: expected 0 or 1")]
    InvalidLabel(f64),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown {kind} `{id}`")]
    Lookup { kind: &'static str, id: String },

    #[error("prediction/label alignment: {0}")]
    Alignment(String),

    #[error("bad tensor file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn shape(layer: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            layer: layer.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}

/// Tags an error with the pipeline stage that produced it.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        })
    }
}
