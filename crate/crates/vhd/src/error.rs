use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum VhdError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: bad magic {found:?}, expected {expected:?}", path.display())]
    BadMagic {
        path: PathBuf,
        found: [u8; 4],
        expected: [u8; 4],
    },
    #[error("{}: unsupported version {found}", path.display())]
    BadVersion { path: PathBuf, found: u32 },
    #[error("{}: truncated, needed {needed} bytes but only {available} remain", path.display())]
    Truncated {
        path: PathBuf,
        needed: u64,
        available: u64,
    },
    #[error("{}: {extra} unexpected trailing bytes", path.display())]
    TrailingBytes { path: PathBuf, extra: u64 },
    #[error("{}: header dimensions {dims:?} overflow the addressable size", path.display())]
    DimensionOverflow { path: PathBuf, dims: Vec<u64> },
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("video {video}: {features} feature rows but {labels} labels")]
    LabelLength {
        video: String,
        features: usize,
        labels: usize,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{}: refusing to write into a non-empty directory (use --force)", .0.display())]
    OutputExists(PathBuf),
    #[error(transparent)]
    Core(#[from] vhd_core::Error),
}

pub type Result<T, E = VhdError> = std::result::Result<T, E>;

impl VhdError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        VhdError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        VhdError::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Process exit code: 3 for numerical failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            VhdError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}
