//! Minimal dense real linear algebra: symmetric eigendecomposition via cyclic
//! Jacobi rotations, Cholesky factorization, triangular and dense solves,
//! Kronecker/vec utilities, and a continuous Lyapunov solver. No external
//! numerical dependencies.

mod eigen;
mod matrix;
mod solve;
pub mod tri;

pub use eigen::{principal_sqrt, sym_eig, SymEig};
pub use matrix::{dot, kron, unvec_cols, vec_cols, Matrix};
pub use solve::{cholesky_upper, lin_solve, solve_lyapunov, tri_solve, TriMode};
