use std::path::PathBuf;


pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("malformed boxed answer: unbalanced braces after \\boxed{{ at byte {offset}")]
    MalformedAnswer { offset: usize },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate trace id {id:?} at line {line}")]
    DuplicateId { id: String, line: usize },

    #[error("could not parse a behavior verdict from response {raw:?}")]
    UnparsableVerdict { raw: String },

    #[error("annotation failed for trace {trace_id:?} on edge {edge}: {reason}")]
    AnnotationFailed {
        trace_id: String,
        edge: usize,
        reason: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("corpus has no usable transitions")]
    EmptyCorpus,

    #[error("chain is not ergodic: {0}")]
    NotErgodic(String),

    #[error("correlation undefined: zero variance in {0}")]
    DegenerateCorrelation(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("bad configuration: {0}")]
    BadConfig(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("missing attention entry: {0}")]
    MissingAttention(String),

    #[error("assumption {assumption} violated: {detail}")]
    AssumptionViolated {
        assumption: &'static str,
        detail: String,
    },

    #[error("no path from node {from} to node {to}")]
    NoPath { from: usize, to: usize },

    #[error("graph contains a cycle")]
    NotADag,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn bad_config(msg: impl Into<String>) -> Self {
        Error::BadConfig(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
