use thiserror::Error;

/// Errors produced by the clustering engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("non-numeric cell at row {row}, column {col}: {value:?}")]
    NonNumericCell { row: usize, col: usize, value: String },

    #[error("no usable rows in {path}")]
    EmptyDataset { path: String },

    #[error("seed count {k} out of range, must be in 1..={n}")]
    BadSeedCount { k: usize, n: usize },

    #[error("pooled seed count {pooled} is smaller than requested k = {k}")]
    PoolTooSmall { pooled: usize, k: usize },

    #[error("client count {p} exceeds row count {n}")]
    TooManyClients { p: usize, n: usize },

    #[error("partition left an empty client after {retries} attempts")]
    EmptyClient { retries: usize },

    #[error("validity index undefined: {0}")]
    UndefinedIndex(String),

    #[error("no uploads supplied to server round")]
    NoUploads,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("numeric invariant violated: {0}")]
    NumericInvariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;
