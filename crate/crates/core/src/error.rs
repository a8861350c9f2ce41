use std::path::PathBuf;

use crate::providers::ProviderError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error("unparseable verdict: {0:?}")]
    UnparseableVerdict(String),

    #[error("classification failed for prompt {prompt_id}: {reason}")]
    ClassificationFailed { prompt_id: String, reason: String },

    #[error("malformed generation: {reason} (found indices {found:?})")]
    MalformedGeneration {
        reason: String,
        found: Vec<usize>,
        raw: String,
    },

    #[error("response set incomplete: {} of {requested} responses before failure: {source}", completed.len())]
    PartialSet {
        completed: Vec<String>,
        requested: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("checklist generation failed: {0}")]
    ChecklistFailed(String),

    #[error("grading failed: {0}")]
    GradeFailed(String),

    #[error("feature disabled: {0}")]
    FeatureDisabled(String),

    #[error("cosine undefined: {0}")]
    UndefinedCosine(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    InvalidConfig(Vec<String>),

    #[error("{path}: line {line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("stage {stage} aborted: {failed} of {total} prompts failed (threshold {threshold})")]
    StageAborted {
        stage: String,
        failed: usize,
        total: usize,
        threshold: f64,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
