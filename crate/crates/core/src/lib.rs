//! Canonical divergence analysis.
//!
//! Finds pairs of linear projections `(u, v)` for two datasets `X` (n × m) and
//! `Y` (k × l) such that the one-dimensional (or r-dimensional) distributions
//! of `Xu` and `β·Yv` are as close as possible under a divergence measure. The
//! datasets may differ in dimensionality and in sample count, and no row of
//! `X` needs to correspond to a row of `Y`.
//!
//! The crate is `no_std` (it needs `alloc`). Enable the `std` feature to get
//! wall-clock timings in fit diagnostics and `std::error::Error` support.
//!
//! Module map:
//!
//! - [`dataset`]: data containers, rescaling, whitening, synthetic generators
//! - [`divergence`]: extended Mallows, quadratic KDE and Pearson divergences
//! - [`scaling`]: the scaling factor β
//! - [`solver`]: the four formulations (`cda`, `mcda`, `rcda`, `mrcda`)
//! - [`baselines`]: linear CCA
//! - [`evaluation`]: subspace error and subspace-cluster scoring

#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baselines;
pub mod dataset;
pub mod divergence;
mod error;
pub mod evaluation;
pub mod linalg;
pub mod rng;
pub mod scaling;
pub mod solver;

pub use error::{Error, Result};

pub use nalgebra::{DMatrix, DVector};
