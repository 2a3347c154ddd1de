use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("degenerate prediction: element-wise product of the two predictions is all zero")]
    DegenerateProduct,

    #[error("stale forward trace: produced by parameters {trace:?}, model is at {model:?}")]
    StaleTrace { trace: (u64, u64), model: (u64, u64) },

    #[error("format error at byte {offset} ({section}): {message}")]
    Format {
        offset: u64,
        section: &'static str,
        message: String,
    },

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite meta-gradient scalar (h1 = {h1}, h2 = {h2}); step aborted")]
    NonFiniteH { h1: f64, h2: f64 },

    #[error("unlabeled pool is exhausted")]
    UnlabeledExhausted,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(what: impl Into<String>) -> Error {
    Error::Dimension(what.into())
}
