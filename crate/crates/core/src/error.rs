use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("evaluation did not converge after {sweeps} sweeps (residual {residual:e})")]
    NonConvergence { sweeps: usize, residual: f64 },

    #[error("belief exhausted: requested {requested} reward tables but only {remaining} remaining")]
    Exhausted { requested: usize, remaining: usize },

    #[error("empty ensemble")]
    EmptyEnsemble,

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("feature map has no entry for state {0}")]
    FeatureGap(usize),

    #[error("training loss became non-finite at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("run record is missing policy snapshots (stride {stride})")]
    MissingSnapshots { stride: usize },

    #[error("no reward function is defined for novel contexts")]
    NovelReward,

    #[error("parse error in {what} at line {line}: {msg}")]
    Parse { what: &'static str, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
