//! Dense matrix kernel: arithmetic, SVD, symmetric eigendecomposition,
//! seeded initialization, and gradient checking.

mod eig;
mod gradcheck;
mod matrix;
pub mod rng;
mod svd;

pub use eig::{sym_eig, SymEig};
pub use gradcheck::grad_check;
pub use matrix::Matrix;
pub use svd::{svd, Svd};
