use std::path::PathBuf;

/// Errors produced by the estimation library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("factorization failed; largest diagonal jitter tried was {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("degenerate leverage {leverage} at row {index}")]
    DegenerateLeverage { index: usize, leverage: f64 },

    #[error("eigendecomposition failed to converge")]
    Eigen,

    #[error("no solution: {0}")]
    Unsolvable(String),

    #[error("data error in {path}: {reason}")]
    Data { path: PathBuf, reason: String },

    #[error("seed {seed} failed: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used by front ends to choose exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter { .. } => ErrorClass::Config,
            Error::DimensionMismatch { .. }
            | Error::Empty(_)
            | Error::Data { .. }
            | Error::Io { .. } => ErrorClass::Data,
            Error::Factorization { .. }
            | Error::DegenerateLeverage { .. }
            | Error::Eigen
            | Error::Unsolvable(_) => ErrorClass::Numeric,
            Error::Seed { source, .. } => source.class(),
        }
    }
}

impl Clone for Error {
    fn clone(&self) -> Self {
        match self {
            Error::DimensionMismatch {
                context,
                expected,
                actual,
            } => Error::DimensionMismatch {
                context,
                expected: *expected,
                actual: *actual,
            },
            Error::Empty(what) => Error::Empty(what),
            Error::InvalidParameter { name, reason } => Error::InvalidParameter {
                name,
                reason: reason.clone(),
            },
            Error::Factorization { jitter } => Error::Factorization { jitter: *jitter },
            Error::DegenerateLeverage { index, leverage } => Error::DegenerateLeverage {
                index: *index,
                leverage: *leverage,
            },
            Error::Eigen => Error::Eigen,
            Error::Unsolvable(m) => Error::Unsolvable(m.clone()),
            Error::Data { path, reason } => Error::Data {
                path: path.clone(),
                reason: reason.clone(),
            },
            Error::Seed { seed, source } => Error::Seed {
                seed: *seed,
                source: source.clone(),
            },
            Error::Io { path, source } => Error::Io {
                path: path.clone(),
                source: std::io::Error::new(source.kind(), source.to_string()),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
