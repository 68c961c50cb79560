//! Stochastic 2D Navier-Stokes on the torus with degenerate-in-the-limit
//! additive noise: Galerkin spectral solver, Ornstein-Uhlenbeck noise,
//! Freidlin-Wentzell action functionals and Monte-Carlo experiment drivers.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod noise;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
