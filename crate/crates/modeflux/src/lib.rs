//! Mode power transport in a two-dimensional, slowly varying acoustic
//! waveguide with a randomly perturbed boundary and turning points.
//!
//! The crate computes the diffusion-limit coefficients of the random
//! mode-coupling problem, chains the moment equations for mean amplitudes,
//! mean powers and power second moments across the sectors delimited by
//! turning points, and validates the limit against a direct Monte Carlo
//! integration of the pre-limit stochastic system.
//!
//! Module map:
//! * [`geometry`] — opening profile D(z), mode count, turning points.
//! * [`modes`] — eigenvalues, eigenfunctions and their integral identities.
//! * [`correlation`] — noise statistics, spectral transforms, path synthesis.
//! * [`coupling`] — coupling coefficients, diffusion matrices, phase drift,
//!   length scales, forward-scattering diagnostic.
//! * [`transport`] — sector-chained moment equations and power ledgers.
//! * [`montecarlo`] — ensemble integration of the pre-limit system.
//! * [`config`] / [`cli`] — run configuration and subcommand orchestration.

pub mod cli;
pub mod config;
pub mod correlation;
pub mod coupling;
pub mod error;
pub mod geometry;
pub mod modes;
pub mod montecarlo;
pub mod ode;
pub mod quadrature;
pub mod transport;

pub use error::{Error, Result};
