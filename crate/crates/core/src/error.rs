use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch for `{name}`: expected {expected:?}, found {found:?}")]
    Shape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("missing tensor `{0}` in weight manifest")]
    MissingTensor(String),

    #[error("coincident geometry: source and microphone share a position")]
    CoincidentGeometry,

    #[error("position {0:?} lies outside the room")]
    OutsideRoom([f64; 3]),

    #[error("degenerate source: {0}")]
    DegenerateSource(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },

    #[error("no context: every key frame is missing and no padding fallback is enabled")]
    NoContext,

    #[error("rank deficient: {frames} frames for {channels} channels")]
    RankDeficient { frames: usize, channels: usize },

    #[error("singular matrix at frequency bin {0}")]
    Singular(usize),

    #[error("signal too short: {0}")]
    TooShort(String),

    #[error("zero reference signal")]
    ZeroReference,

    #[error("malformed frame: {0}")]
    Frame(String),

    #[error("crc mismatch: header {expected:#010x}, payload {actual:#010x}")]
    Crc { expected: u32, actual: u32 },

    #[error("malformed weight manifest: {0}")]
    Manifest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("sample rate {found} Hz does not match {expected} Hz")]
    SampleRate { expected: u32, found: u32 },

    #[error("scene config: {0}")]
    SceneConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
