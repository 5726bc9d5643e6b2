use alloc::string::String;

/// Error type shared by every module of the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid gesture spec: {0}")]
    InvalidSpec(String),
    #[error("time {t} s outside trace span [0, {duration}] s")]
    OutOfRange { t: f64, duration: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("trace covers {have} s but {need} s are required")]
    Coverage { have: f64, need: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid mount model: {0}")]
    InvalidMount(String),
    #[error("series length {len} is shorter than the required {required}")]
    InvalidLength { len: usize, required: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value encountered in {0}")]
    Numeric(String),
    #[error("diffusion step {t} outside [{lo}, {hi}]")]
    InvalidStep { t: usize, lo: usize, hi: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),
}

pub type Result<T> = core::result::Result<T, Error>;
