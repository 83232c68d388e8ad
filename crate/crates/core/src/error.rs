use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("detuning grid is empty")]
    EmptyGrid,

    #[error("detuning grid is not strictly increasing at index {index}")]
    NonMonotoneGrid { index: usize },

    #[error("spectrum has no points")]
    EmptySpectrum,

    #[error("sigma must be given for all points or none (first mismatch at index {index})")]
    MixedSigma { index: usize },

    #[error("need at least {needed} points to fit, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("normal equations are singular")]
    SingularNormalEquations,

    #[error("light shift is undefined at zero detuning")]
    ZeroDetuning,

    #[error("coupling per atom must be positive")]
    NonPositiveCoupling,

    #[error("regression needs at least two distinct atom numbers")]
    DegenerateAbscissa,

    #[error("denominator vanishes: {0}")]
    ZeroDenominator(&'static str),

    #[error("spectrum {index} carries no `n_atoms` annotation")]
    MissingAtomNumber { index: usize },

    #[error("{path}:{line}: detunings are not strictly increasing")]
    NonMonotoneDetunings { path: String, line: usize },

    #[error("{path}:{line}: sigma column must be filled for all rows or none")]
    MixedSigmaPresence { path: String, line: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("{path}: invalid value for `{key}`: {msg}")]
    Schema { path: String, key: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }
}
