//! Galerkin discretization of Schrödinger evolution equations on box domains
//! and their propagation by diagonal Padé approximants.
//!
//! The pipeline is:
//!
//! 1. [`mesh`] builds a dyadic Dirichlet grid on an interval or a rectangle.
//! 2. [`projection`] attaches the tensor-product hat basis and the
//!    interpolation-based decomposition/summation pair.
//! 3. [`gram`] assembles the mass matrix and its SPD square root, which define
//!    the inner product every other module measures in.
//! 4. [`operators`] builds the kinetic term as an exact factorization
//!    `M⁻¹ Cᵀ M' C` and potential multiplication operators.
//! 5. [`propagator`] builds the one-step map `R_pp(-iτH)`, unitary in the
//!    mass-matrix geometry, and its forward/reverse powers.
//! 6. [`duhamel`] solves nonlinear problems by Picard iteration on the
//!    discrete integrating-factor form.
//! 7. [`observables`] measures expectations and checks constants of motion.

pub mod convergence;
pub mod duhamel;
pub mod error;
pub mod gram;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod observables;
pub mod operators;
pub mod projection;
pub mod propagator;
pub mod quadrature;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Coefficient vector of a discrete state.
pub type CVector = nalgebra::DVector<Complex64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
/// Dense real matrix.
pub type RMatrix = nalgebra::DMatrix<f64>;
