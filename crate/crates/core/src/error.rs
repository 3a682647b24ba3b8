use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("channel mismatch: expected {expected} input channels, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("kernel {kernel_h}x{kernel_w} larger than padded input {padded_h}x{padded_w}")]
    KernelTooLarge {
        kernel_h: usize,
        kernel_w: usize,
        padded_h: usize,
        padded_w: usize,
    },

    #[error("reflect pad {pad} must be smaller than input extent {height}x{width}")]
    ReflectPadTooLarge { pad: usize, height: usize, width: usize },

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("need at least 2 Monte Carlo samples, got {0}")]
    TooFewSamples(usize),

    #[error("offset ({di}, {dj}) exceeds output extent {height}x{width}")]
    OffsetOutOfRange {
        di: i64,
        dj: i64,
        height: usize,
        width: usize,
    },

    #[error("degenerate design matrix: {0}; use a ridge strength lambda > 0")]
    DegenerateDesign(String),

    #[error("stage {index}: {source}")]
    Stage {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
