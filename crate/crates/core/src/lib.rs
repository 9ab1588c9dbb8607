//! Learned unitary split preconditioners.
//!
//! A weighted graph over the `n` coordinates of a signal defines a Laplacian
//! `L = B diag(w) B^T`. Its eigenvector matrix `U` is orthonormal, so `U^T R U`
//! is a unitary split preconditioning of a positive definite matrix `R`. The
//! [`precog`] module fits the edge weights `w` by gradient descent so that the
//! power-normalized transformed matrix has its spectrum inside a narrow band
//! around one.
//!
//! The remaining modules provide the pieces around that loop: graph
//! construction ([`graph`]), dense spectral kernels ([`spectral`]), classical
//! preconditioners for comparison ([`baselines`]), test-matrix and signal
//! generators ([`matgen`]) and transform-domain LMS filters ([`tdlms`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
mod error;
pub mod graph;
pub mod matgen;
pub mod precog;
pub mod rng;
pub mod spectral;
pub mod tdlms;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};
pub use nalgebra::{DMatrix, DVector};

/// Crate version, embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
