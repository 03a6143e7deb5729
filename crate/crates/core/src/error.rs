use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid sampling scheme: {0}")]
    InvalidScheme(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive semi-definite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },

    #[error("non-finite value encountered in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("insufficient observations: need {needed}, have {available}")]
    InsufficientData { needed: usize, available: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("{matrix} is singular or not positive definite at block {block} (determinant {determinant:e})")]
    SingularBlock {
        matrix: &'static str,
        block: usize,
        determinant: f64,
    },

    #[error("singular information matrix for the {0} block")]
    SingularInformation(&'static str),

    #[error("objective is not finite at start point {index}")]
    NonFiniteStart { index: usize },

    #[error("optimizer did not converge after {iterations} iterations (best value {value}, point {best:?})")]
    NonConvergence {
        best: Vec<f64>,
        value: f64,
        iterations: usize,
    },

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Whether the failure is due to the data rather than the configuration.
    pub fn is_degenerate_data(&self) -> bool {
        matches!(
            self.root(),
            Error::DegenerateData(_)
                | Error::InsufficientData { .. }
                | Error::SingularBlock { .. }
                | Error::SingularInformation(_)
        )
    }

    pub fn is_non_convergence(&self) -> bool {
        matches!(self.root(), Error::NonConvergence { .. })
    }
}
