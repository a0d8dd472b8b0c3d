use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward requires a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("non-finite value encountered: {0}")]
    NonFiniteValue(String),
    #[error("input size {h}x{w} invalid: both sides must be multiples of 32 and at least 64")]
    BadSize { h: usize, w: usize },
    #[error("masking ratio {0} outside [0, 0.95]")]
    BadRatio(f64),
    #[error("grid {h}x{w} cannot realize {target} masked cells with the {strategy} strategy")]
    GridTooSmall { h: usize, w: usize, target: usize, strategy: &'static str },
    #[error("reconstruct_p5 consistent loss requires the flattened p5 target")]
    MissingP5,
    #[error("point ({x}, {y}) lies outside the {w}x{h} image")]
    PointOutOfBounds { x: f64, y: f64, w: usize, h: usize },
    #[error("no target cells in label grid")]
    NoPositives,
    #[error("no background cells in label grid")]
    NoNegatives,
    #[error("length mismatch: {0} predictions vs {1} ground truths")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: format error at byte {offset}: {msg}")]
    Format { path: PathBuf, offset: usize, msg: String },
    #[error("checkpoint manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown ablation axis `{0}`")]
    UnknownAxis(String),
    #[error("non-finite training loss at epoch {epoch}, batch {batch} (batch seed {seed}): {detail}")]
    Diverged { epoch: usize, batch: usize, seed: u64, detail: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, offset: usize, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), offset, msg: msg.into() }
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    /// Process exit code for CLI surfaces: 2 for configuration problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::BadRatio(_) | Error::UnknownAxis(_) | Error::GridTooSmall { .. } => 2,
            Error::Io { .. }
            | Error::Format { .. }
            | Error::ManifestMismatch(_)
            | Error::EmptyInput
            | Error::PointOutOfBounds { .. }
            | Error::BadSize { .. }
            | Error::LengthMismatch(..) => 3,
            _ => 1,
        }
    }
}
