use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("shape mismatch at layer {layer}: {reason}")]
    ShapeMismatch { layer: usize, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    #[error("malformed IDX file: {0}")]
    Idx(String),

    #[error("bundle format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("weight byte count mismatch at layer {layer}: expected {expected} bytes, found {found}")]
    ByteCount { layer: usize, expected: usize, found: usize },

    #[error("unknown layer kind `{0}`")]
    UnknownLayerKind(String),

    #[error("invalid mutation: {0}")]
    InvalidMutation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("layer {0} is not present in the activation trace")]
    MissingLayer(usize),

    #[error("neuron address {index} is outside layer {layer} ({width} neurons)")]
    AddressOutOfRange { layer: usize, index: usize, width: usize },

    #[error("budget {requested} exceeds candidate count {available}")]
    BudgetExceeds { requested: usize, available: usize },

    #[error("no fault types occur in the candidate set")]
    NoFaults,

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("case {0} has no ground-truth label")]
    MissingLabel(usize),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File { path: path.into(), source }
    }
}
