//! Identification of the reaction coefficient in spectral fractional diffusion.
//!
//! The spectral fractional power `L^s` of `L = -(A u')' + q u` on an interval
//! `Ω` is realized through its extension to the half-cylinder `Ω × (0, ∞)`
//! with weight `y^α`, `α = 1 - 2s`. The cylinder is truncated at height `Y`
//! and discretized with P1 elements in `x` times hp elements on a geometric
//! mesh in `y`. On top of this forward map the crate provides the reduced
//! Tikhonov functional with adjoint gradients and Hessian actions, and a
//! projected-gradient solver over piecewise-constant coefficients.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod identification;
pub mod linalg;
pub mod omega;
pub mod params;
pub mod quadrature;
mod snapshot;
pub mod spectral;
pub mod tensor;
pub mod ymesh;

pub use error::{Error, Result};
pub use omega::{assemble_omega_forms, Coefficient, OmegaForms, OmegaMesh};
pub use params::FractionalParams;
pub use spectral::{eigenpairs, EigenDecomposition};
pub use tensor::TensorSpace;
pub use ymesh::{geometric_mesh, GradedExtensionMesh};
