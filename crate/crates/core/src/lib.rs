//! Information-theoretic data-injection attacks on linear Gaussian feedback loops.
//!
//! The crate is `no_std` (it needs `alloc`). It covers the whole analytic
//! pipeline:
//!
//! - [`numkernel`]: Lyapunov, Sylvester and Riccati solvers plus small dense helpers.
//! - [`plant`]: the plant, the observer-based closed loop and its stationary moments.
//! - [`divergence`]: Gaussian KL divergences and the attack cost.
//! - [`attack`]: full, single-measurement, greedy sparse and exhaustive attack constructions.
//! - [`detector`]: likelihood-ratio detection and Monte-Carlo estimates.
//! - [`cstr`]: the two-CSTR-in-series case study (nonlinear model, linearization, gains).
//!
//! Measurement and state indices are zero-based throughout the library.
#![no_std]

extern crate alloc;

pub mod attack;
pub mod cstr;
pub mod detector;
pub mod divergence;
mod error;
pub mod numkernel;
pub mod plant;

pub use error::{Error, Result};

/// Dense matrix used for every quantity in the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
/// Dense column vector.
pub type Vector = nalgebra::DVector<f64>;
