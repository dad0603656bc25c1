use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: String },

    #[error("line {line}: schema error: {message}")]
    Schema { line: usize, message: String },

    #[error("line {line}: invalid record: {message}")]
    Validation { line: usize, message: String },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(
        "non-finite loss at epoch {epoch}, batch {batch} (learning rate {learning_rate})"
    )]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },

    #[error("non-finite t-SNE gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },

    #[error("perplexity search did not converge for row {row}")]
    PerplexityNotConverged { row: usize },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
