use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("cyclic bone hierarchy involving `{0}`")]
    CyclicHierarchy(String),

    #[error("unknown dof channel `{channel}` on bone `{bone}`")]
    UnknownChannel { bone: String, channel: String },

    #[error("frame {frame}: bone `{bone}` has {got} channels, expected {expected}")]
    ChannelCount {
        frame: usize,
        bone: String,
        got: usize,
        expected: usize,
    },

    #[error("frame indices not monotonic: {prev} followed by {next}")]
    FrameOrder { prev: usize, next: usize },

    #[error("schema violation at `{path}`: {msg}")]
    Schema { path: String, msg: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("quaternion not unit norm (|q| = {0})")]
    NonUnitQuaternion(f64),

    #[error("axis not unit norm (|a| = {0})")]
    NonUnitAxis(f64),

    #[error("mapped joint `{0}` not present in the source skeleton")]
    MissingJoint(String),

    #[error("frame rate must be positive, got {0}")]
    FrameRate(f64),

    #[error("time {t} outside [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("motion library is empty")]
    EmptyLibrary,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error("unknown field `{0}`")]
    UnknownField(String),

    #[error("empty batch: {0}")]
    EmptyBatch(&'static str),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn schema(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn read_to_string(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_string(path: &std::path::Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}
