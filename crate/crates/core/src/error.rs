use thiserror::Error;

/// Errors raised by the dense linear-algebra substrate and everything built on it.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite ({context})")]
    NotPositiveDefinite { context: String },
    #[error("triangular matrix has zero diagonal entry at index {index}")]
    SingularTriangular { index: usize },
    #[error("linear system is singular ({context})")]
    SingularSystem { context: String },
    #[error("matrix is numerically singular ({context})")]
    NearSingular { context: String },
    #[error("eigenvalue iteration did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("matrix contains a non-finite entry")]
    NotFinite,
    #[error("{context}")]
    Invalid { context: String },
}

impl LinalgError {
    pub(crate) fn invalid(context: impl Into<String>) -> Self {
        LinalgError::Invalid {
            context: context.into(),
        }
    }
}
