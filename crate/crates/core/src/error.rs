use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed image: {0}")]
    Image(String),

    #[error("index ({row}, {col}) outside {m}x{n} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        m: usize,
        n: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("svd did not converge after {iterations} sweeps (achieved tolerance {achieved:e})")]
    NoConvergence { iterations: usize, achieved: f64 },

    #[error("factorization has rank {available}, cutoff {requested} requested")]
    InsufficientRank { requested: usize, available: usize },

    #[error("cold user {user} at cutoff {k}: low-rank row is zero")]
    ColdUser { user: usize, k: usize },

    #[error("cannot sample from a zero vector")]
    ZeroVector,

    #[error("threshold {threshold} reaches into the uncomputed singular tail (bound {tail_bound})")]
    UncomputedTail { threshold: f64, tail_bound: f64 },

    #[error("eta too small for gamma: eta/(1+gamma) = {ratio} must exceed 1")]
    EtaTooSmall { ratio: f64 },

    #[error("threshold filters everything: largest sketch singular value {largest} < {threshold}")]
    ThresholdFiltersEverything { threshold: f64, largest: f64 },

    #[error("inconsistent flip at ({i}, {j}): entry is {value}")]
    InconsistentFlip { i: usize, j: usize, value: u8 },

    #[error("no admissible flips: {0}")]
    NoAdmissibleFlips(String),

    #[error("no typical users for gamma = {gamma}")]
    NoTypicalUsers { gamma: f64 },

    #[error("user {user} needs {needed} records but only {available} products exist")]
    TooFewProducts {
        user: usize,
        needed: usize,
        available: usize,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
