use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state {state}, action {action}: transition row sums to {sum} (expected 1)")]
    NonStochasticRow { state: usize, action: usize, sum: f64 },

    #[error("state {state}, action {action}: negative or non-finite probability {prob}")]
    InvalidProbability { state: usize, action: usize, prob: f64 },

    #[error("policy row for state {state} is not a probability vector (sum {sum})")]
    InvalidPolicyRow { state: usize, sum: f64 },

    #[error("terminal state {0} is not absorbing")]
    TerminalNotAbsorbing(usize),

    #[error("state {0} is marked both terminal and target")]
    TerminalTargetOverlap(usize),

    #[error("index {index} out of range (limit {limit}) in {context}")]
    IndexOutOfRange { index: usize, limit: usize, context: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch { expected: usize, got: usize, context: &'static str },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("action {action} outside the admissible bound {bound}")]
    ActionOutOfRange { action: f64, bound: f64 },

    #[error("cannot step from terminal state {0}")]
    SteppedFromTerminal(usize),

    #[error("LP infeasible: budget {budget} below smallest constraint coefficient {min_coeff}")]
    InfeasibleLp { budget: f64, min_coeff: f64 },

    #[error("ground-truth safe set is empty")]
    EmptyTruthSet,

    #[error("linear system is singular ({0})")]
    Singular(&'static str),

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("run {name} failed: {source}")]
    RunFailed {
        name: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }
}
