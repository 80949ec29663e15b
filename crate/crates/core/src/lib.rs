//! Outlier eigenpairs of finite-rank perturbations of sparse non-Hermitian
//! random matrices.
//!
//! `Y = X + E` with `X` a sparse i.i.d. matrix whose spectrum fills the unit
//! disk and `E = P Λ W*` of fixed rank. Outliers of `Y` are found as roots of
//! `det(I + V* R(λ) U)` and their eigenvectors rebuilt as `R(λ) U a`.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod matrix_model;
pub mod outlier;
pub mod perturbation;
pub mod resolvent;
pub mod rng;

pub use error::{Error, Result};
