//! Preconditioned stochastic gradient descent.
//!
//! Preconditioners are estimated online from noisy gradient perturbations by
//! relative gradient descent on triangular Cholesky factors, under three
//! selectable fitting criteria. The crate bundles the optimizer, closed-form
//! oracle preconditioners for validation, quality metrics, the experiment
//! models, and dataset utilities.

pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod oracles;
pub mod precond;
pub mod psgd;

pub use error::LinalgError;
