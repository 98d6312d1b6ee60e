use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("signal of {len} samples is shorter than one window ({win} samples)")]
    TooShort { len: usize, win: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("estimate equals reference exactly (infinite ratio)")]
    InfiniteRatio,
    #[error("{0} signal is silent")]
    Silent(&'static str),
    #[error("unsupported wav format in {path}: {reason}")]
    UnsupportedWav { path: PathBuf, reason: String },
    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },
    #[error("unknown parameter group `{0}`")]
    UnknownGroup(String),
    #[error("missing prerequisite: {0}")]
    MissingPrerequisite(String),
    #[error("non-finite value detected in {0}")]
    NonFinite(String),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }
}
