//! Spectral and Monte Carlo toolkit for one-dimensional branching
//! diffusions and their Feynman-Kac semigroups.
//!
//! The pipeline: a [`model::ModelSpec`] (drift, rates, hypothesis constants)
//! is reduced to canonical Schroedinger form, [`spectral::solve_eigen`]
//! produces the grid eigenbasis, [`semigroup::KernelEvaluator`] turns it
//! into transition kernels and semigroup actions, and [`qsd`], [`qprocess`]
//! and [`branching`] build the quasi-stationary law, the conditioned
//! process, and direct population simulations that cross-check one another.
//! [`hermite`] carries the closed forms of the exactly solvable example
//! used as the oracle throughout.

pub mod branching;
pub mod config;
pub mod error;
pub mod grid;
pub mod hermite;
pub mod interp;
pub mod mc;
pub mod model;
pub mod qprocess;
pub mod qsd;
pub mod quad;
pub mod semigroup;
pub mod spectral;
pub mod tridiag;

pub use error::{Error, ErrorClass, Result};
pub use grid::Grid;
pub use model::{ModelSpec, ReducedSpec};
pub use semigroup::KernelEvaluator;
pub use spectral::SpectralBasis;
