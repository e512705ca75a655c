//! Explicit time-step stability analysis for linear (P1) finite element
//! discretizations of anisotropic diffusion on simplicial meshes.
//!
//! The crate assembles mass, lumped mass and stiffness matrices, computes the
//! largest eigenvalue of the generalized pencil `(A, M~)` exactly or
//! iteratively, evaluates diagonal-ratio and geometric bounds on it, reports
//! anisotropic mesh quality measures, and integrates the semi-discrete system
//! with first-order Runge–Kutta–Chebyshev schemes.

pub mod assembly;
pub mod bounds;
pub mod error;
pub mod experiments;
pub mod field;
pub mod integrate;
pub mod mesh;
pub mod quadrature;
pub mod quality;
pub mod small;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
