use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),

    #[error("duplicate vertex id {0:?}")]
    DuplicateVertex(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown external function {0:?}")]
    UnknownExternal(String),

    #[error("traffic light {0} is not one-hot")]
    NotOneHot(String),

    #[error("model is not simple: {0}")]
    NotSimple(String),

    #[error("no {what} within {steps} steps")]
    BudgetExhausted { what: &'static str, steps: usize },

    #[error("state cycle {cycle_start}..{cycle_end} has unstable output: the run does not output-converge")]
    UnstableOutputCycle { cycle_start: usize, cycle_end: usize },

    #[error("unknown gallery entry {0:?}")]
    UnknownGalleryEntry(String),

    #[error("trace is missing protocol instrumentation")]
    MissingInstrumentation,

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
