//! Distributed Bayesian inference for Gaussian-process varying-coefficient
//! models: data may be split into subsets, each subset runs the same
//! latent-Gaussian sampler against a tempered posterior, and the subset draws
//! are recombined into a single approximate posterior.

// Link the BLAS/LAPACK backend into every downstream target.
extern crate blas_src;

pub mod combiner;
pub mod diagnostics;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod model;
pub mod partitioner;
pub mod runner;
pub mod sampler;
pub mod simgen;
pub mod streams;

pub use error::{Result, VcgpError};
