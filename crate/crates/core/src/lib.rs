//! Spectral surrogate models for stochastic simulators.
//!
//! A stochastic simulator returns a random output at a fixed input. Fixing
//! its latent randomness gives a deterministic *trajectory* `x -> y`. The
//! emulator built here approximates every sampled trajectory by a sparse
//! polynomial chaos expansion ([`pce`]), compresses the set of expansions by
//! a Karhunen-Loeve expansion computed as PCA on the coefficient vectors
//! ([`kle`]), and infers the joint law of the resulting random coefficients
//! ([`dist`]). The assembled [`emulator::StochasticEmulator`] produces new
//! trajectories, marginal samples and covariances.
//!
//! [`testbeds`] holds benchmark simulators and [`metrics`] the validation
//! errors; [`study`] runs convergence grids over both.

pub mod basis;
pub mod data;
pub mod dist;
pub mod emulator;
pub mod error;
pub mod kle;
pub mod metrics;
pub mod pce;
pub mod rng;
mod rows;
pub mod special;
pub mod study;
pub mod testbeds;

pub use error::{Error, Result, Stage};
