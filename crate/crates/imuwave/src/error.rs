use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },
    #[error("usage: {0}")]
    Usage(String),
    #[error("stratification: {0}")]
    Stratification(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Core(#[from] imuwave_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// 1 usage/config, 2 I/O or format, 3 numeric or invariant.
    pub fn exit_code(&self) -> i32 {
        use imuwave_core::Error as C;
        match self {
            Self::Usage(_) | Self::Config { .. } | Self::Stratification(_) => 1,
            Self::Io { .. } | Self::Format { .. } | Self::Parse { .. } => 2,
            Self::Invariant(_) => 3,
            Self::Core(e) => match e {
                C::Config(_) | C::InvalidArgument(_) | C::InvalidSpec(_) | C::InvalidMount(_) | C::InvalidDataset(_) => 1,
                C::Shape(_) | C::InvalidInput(_) | C::InvalidLength { .. } => 2,
                _ => 3,
            },
        }
    }
}
