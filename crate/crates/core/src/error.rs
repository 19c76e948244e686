use thiserror::Error;

/// Errors produced anywhere in the synthesis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("unknown column `{name}` at col {col}")]
    UnknownColumn { name: String, col: usize },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unparseable cell, row {row}, col {col}: {msg}")]
    UnparseableCell { row: usize, col: usize, msg: String },

    #[error("out-of-domain label `{label}`, row {row}, col {col}")]
    OutOfDomainLabel { label: String, row: usize, col: usize },

    #[error("out-of-bounds value {value}, row {row}, col {col}")]
    OutOfBounds { value: f64, row: usize, col: usize },

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("attribute `{0}` is not integer-encoded")]
    Unencoded(String),

    #[error("attribute `{0}` is not categorical")]
    NotCategorical(String),

    #[error("privacy budget overdraft at `{label}`: requested {requested}, remaining {remaining}")]
    Overdraft {
        label: String,
        requested: f64,
        remaining: f64,
    },

    #[error("marginal over {attributes:?} has {cells} cells, cap is {cap}")]
    MarginalTooLarge {
        attributes: Vec<usize>,
        cells: u128,
        cap: usize,
    },

    #[error("junction tree clique {attributes:?} has {cells} cells, cap is {cap}")]
    CliqueTooLarge {
        attributes: Vec<usize>,
        cells: u128,
        cap: usize,
    },

    #[error("clique mismatch: {0}")]
    CliqueMismatch(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// Wrap an error with the name of the pipeline stage it came from.
    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
