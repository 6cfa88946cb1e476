use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("backward requires a scalar root, got a {rows}x{cols} value")]
    NonScalarRoot { rows: usize, cols: usize },

    #[error("standard deviation at index {index} must be positive and finite, got {value}")]
    NonPositiveStd { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite gradient in parameter tensor `{tensor}`")]
    NonFiniteGradient { tensor: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("training diverged: loss increased for {epochs} consecutive epochs (last epoch {epoch})")]
    Divergence { epoch: usize, epochs: usize },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("too many malformed rows: skipped {skipped} of {total}")]
    TooManyMalformedRows { skipped: usize, total: usize },

    #[error("matrix is empty after filtering ({students} students, {questions} questions remain)")]
    EmptyMatrix { students: usize, questions: usize },

    #[error("split `{0}` is empty")]
    EmptySplit(&'static str),

    #[error("duplicate question index {0} in conditioning set")]
    DuplicateQuestion(usize),

    #[error("question index {index} out of range for {count} questions")]
    QuestionOutOfRange { index: usize, count: usize },

    #[error("question {0} has no observed answers")]
    NoObservations(usize),

    #[error("question {0} is already in the conditioning set")]
    AlreadyConditioned(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
