use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix must be square with at least 2 rows, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },

    #[error("entry ({row}, {col}) = {value} lies outside [0, 1]")]
    Range { row: usize, col: usize, value: f64 },

    #[error("self-entailment diagonal entry {index} = {value} is below 0.5")]
    Diagonal { index: usize, value: f64 },

    #[error("question {question_id}: {matrix} is required but absent")]
    MissingMatrix {
        question_id: String,
        matrix: &'static str,
    },

    #[error("question {question_id}: {message}")]
    InconsistentCase {
        question_id: String,
        message: String,
    },

    #[error("score list is empty")]
    EmptyScores,

    #[error("labels contain a single class ({positives} positive, {negatives} negative)")]
    DegenerateLabels { positives: usize, negatives: usize },

    #[error("question {question_id} has no label")]
    MissingLabel { question_id: String },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("cross-consistency provider failed: {0}")]
    Provider(String),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
