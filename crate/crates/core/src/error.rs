use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid perturbation scheme: {0}")]
    Scheme(String),

    #[error("invalid disorder law: {0}")]
    Disorder(String),

    #[error(
        "matrix dimension {dim} exceeds the configured cap of {cap} \
         (raise it with ANDERSON_DECORR_CAP or --cap)"
    )]
    DimensionCap { dim: usize, cap: usize },

    #[error("disorder vector has {got} entries but the scheme has {expected} random variables")]
    DisorderLength { expected: usize, got: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("matrix has a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error("brute-force oracle accepts dimension <= 8, got {0}")]
    OracleTooLarge(usize),

    #[error("eigenvectors were not computed for this spectrum")]
    MissingEigenvectors,

    #[error("no eigenvalues in window [{lo}, {hi}]")]
    EmptyWindow { lo: f64, hi: f64 },

    #[error("unstable window: {0}")]
    UnstableWindow(String),

    #[error("invalid interval: {0}")]
    Interval(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration file {}: {message}", path.display())]
    ConfigFile { path: PathBuf, message: String },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("run aborted: {0}")]
    RunAborted(String),
}

impl Error {
    /// True for errors caused by bad user input (configuration, flags, shapes),
    /// as opposed to failures while computing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Geometry(_)
                | Error::Scheme(_)
                | Error::Disorder(_)
                | Error::DimensionCap { .. }
                | Error::DisorderLength { .. }
                | Error::Interval(_)
                | Error::InvalidArgument(_)
                | Error::ConfigFile { .. }
                | Error::Validation(_)
                | Error::OracleTooLarge(_)
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
