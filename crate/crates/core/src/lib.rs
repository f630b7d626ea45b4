//! Numerical laboratory for first-order stationary mean-field games with
//! quadratic Hamiltonian on the flat torus.
//!
//! The discounted system
//!
//! ```text
//! ε u + |Du|²/2 + V = g(m),    ε m - div(m Du) = ε
//! ```
//!
//! is solved through its single-equation reduction with damped Newton and
//! continuation in the potential. On top of the solver sit the ergodic
//! (`ε → 0`) limit, the first-order asymptotic correctors, closed-form
//! oracle solutions with vanishing densities, and the Mather-measure
//! diagnostics used to test which limit the discounted problem selects.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`, which is what the command-line tool uses.


// Numerical kernels index several arrays in lockstep, and `!(x > 0)` style
// guards are deliberate: they reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]
pub mod closed_form;
pub mod corrector;
pub mod discounted;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod selection;

pub use discounted::{
    assemble_jacobian, continuation_solve, newton_solve, recover_density, residual, SolverOptions,
};
pub use error::{Error, Result};
pub use grid::{divergence_central, gradient_central, integrate, laplacian, norms, Norms};
pub use model::{check_assumption_osc, smoothed_inverse, smoothed_inverse_with_derivative};
pub use scalar::Scalar;

pub type TorusGrid = grid::TorusGrid<f64>;
pub type GridField = grid::GridField<f64>;
pub type VectorField = grid::VectorField<f64>;
pub type Coupling = model::Coupling<f64>;
pub type Potential = model::Potential<f64>;
pub type Regularization = model::Regularization<f64>;
pub type Model = model::Model<f64>;
pub type DiscountedSolution = discounted::DiscountedSolution<f64>;
pub type LinearizedOperator = discounted::LinearizedOperator<f64>;
pub type ErgodicTriple = corrector::ErgodicTriple<f64>;
pub type CorrectorSolution = corrector::CorrectorSolution<f64>;
pub type CandidateSolution = closed_form::CandidateSolution<f64>;
pub type SweepResult = selection::SweepResult<f64>;
