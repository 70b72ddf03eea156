use std::path::PathBuf;

use crate::autodiff::OpKind;

/// Errors raised anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value produced by {op:?}")]
    NonFiniteValue { op: OpKind },

    #[error("operand {id} does not exist on a tape of length {len}")]
    UnknownOperand { id: usize, len: usize },

    #[error("{op:?} expects {expected} operand(s), got {got}")]
    Arity {
        op: OpKind,
        expected: usize,
        got: usize,
    },

    #[error("non-finite adjoint at node {node}")]
    NonFiniteGradient { node: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{function}: input {value} outside domain {lo}..={hi} (coordinate {coordinate})")]
    Domain {
        function: &'static str,
        coordinate: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("{function}: input {value} lies in the excluded band |x| < {half_width} (coordinate {coordinate})")]
    Excluded {
        function: &'static str,
        coordinate: usize,
        value: f64,
        half_width: f64,
    },

    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0} did not converge")]
    ConvergenceFailure(&'static str),

    #[error("noise ratio {alpha} cannot be met with a non-negative number of noise columns")]
    InfeasibleRatio { alpha: f64 },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("non-numeric cell {value:?} at row {row}, column {column}")]
    NonNumericCell {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("target is constant; r2 is undefined")]
    DegenerateTarget,

    #[error("lead is undefined for a zero baseline metric")]
    UndefinedLead,

    #[error("fft length {0} is not a power of two >= 2")]
    BadLength(usize),

    #[error("exact Shapley enumeration supports at most {max} features, got {got}")]
    TooManyFeatures { got: usize, max: usize },

    #[error("training diverged at epoch {epoch}")]
    DivergenceAbort {
        epoch: usize,
        history: Box<crate::optim::TrainHistory>,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("checksum mismatch: {0}")]
    Checksum(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
