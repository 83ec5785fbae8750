use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed model manifest: {0}")]
    Manifest(String),

    #[error("layer {layer}: shape mismatch: {detail}")]
    LayerShape { layer: usize, detail: String },

    #[error("layer {layer}: weight blob truncated (need bytes {start}..{end}, blob has {len})")]
    TruncatedWeights {
        layer: usize,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("weight blob checksum mismatch: manifest {expected}, blob {actual}")]
    Checksum { expected: String, actual: String },

    #[error("input {index}: expected shape {expected:?}, got {actual:?}")]
    InputShape {
        index: usize,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("image format: {0}")]
    Image(String),

    #[error("corpus: {0}")]
    Corpus(String),

    #[error("profile: {0}")]
    Profile(String),

    #[error("run directory: {0}")]
    Run(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("no seed is classified correctly by the model")]
    NoValidSeeds,

    #[error("empty batch pool")]
    EmptyPool,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("json: {0}")]
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
