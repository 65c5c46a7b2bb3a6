//! Numerical toolkit for anisotropic Moser–Trudinger problems.
//!
//! The crate covers Finsler norm algebra, Wulff geometry and convex
//! symmetrization, a variational discretisation of the n-Finsler-Laplacian
//! with Dirichlet, eigenvalue and Green-function solvers, the perturbed
//! Moser–Trudinger functional with subcritical maximisation, and explicit
//! concentrating test-function families.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod blowup;
pub mod domain;
pub mod error;
pub mod finsler;
pub mod grid;
pub mod mt;
pub mod pde;
pub mod quad;
pub mod symmetrization;

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use domain::Domain;
pub use error::{Error, Result};
pub use finsler::{DualityReport, FinslerNorm, NormSpec};
pub use grid::{Grid, GridFunction, Mesh};
