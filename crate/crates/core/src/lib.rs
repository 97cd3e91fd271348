//! Numerical laboratory for stable solutions of `-L u = lambda f(u)`.
//!
//! The crate is layered bottom-up:
//!
//! * [`exprlang`]: parsing, evaluation and differentiation of user formulas;
//! * [`geometry`]: lattices, fields, quadrature, coverings, reflection;
//! * [`operators`]: coefficient audits, discrete `L` and `J_u`, flattening;
//! * [`solver`]: Newton, monotone iteration, eigenvalues, continuation;
//! * [`estimators`]: integral functionals and inequality checks.

pub mod estimators;
pub mod exprlang;
pub mod geometry;
pub mod linalg;
pub mod operators;
pub mod solver;
