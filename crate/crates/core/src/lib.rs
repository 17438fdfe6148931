//! Finite-width multilayer perceptrons with heavy-tailed random weights, and
//! the symmetric α-stable laws they converge to as the layer widths grow.
//!
//! The crate is organized around one pipeline:
//!
//! * [`heavy`] — regularly varying weight distributions `P(|W| > t) = t^{-α} L(t)`,
//!   their norming sequences `a_n`, and exact samplers;
//! * [`stable`] — symmetric α-stable laws, their characteristic functions,
//!   fractional moments, and spectral measures for the multivariate case;
//! * [`mlp`] — the finite-width network simulator with reproducible,
//!   schedule-independent randomness (see [`rng`]);
//! * [`limit`] — the infinite-width limit: the layerwise scale recursion, the
//!   discrete spectral-measure recursion for several inputs, and Gaussian
//!   branches for finite-variance layers;
//! * [`stats`] — empirical characteristic functions, tail-index and scale
//!   estimators, and the width-sweep harness that compares simulation against
//!   the predicted limit;
//! * [`counterexample`] — the ReLU/Pareto configuration whose classically
//!   scaled sums diverge, with its exact product-tail law.
//!
//! All numerical code is generic over the scalar type through [`Real`];
//! `f64` is the intended precision for production runs and the type aliases
//! at the crate root fix it.

pub mod counterexample;
pub mod error;
pub mod heavy;
pub mod limit;
pub mod linalg;
pub mod mlp;
pub mod quad;
pub mod real;
pub mod rng;
pub mod stable;
pub mod stats;

pub use error::{Error, Result};
pub use real::Real;

/// Crate version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Production-precision aliases: all shipped binaries run in `f64`.
pub type TailSpec64 = heavy::TailSpec<f64>;
pub type NetworkConfig64 = mlp::NetworkConfig<f64>;
pub type LimitChain64 = limit::LimitChain<f64>;
pub type JointChain64 = limit::JointChain<f64>;
pub type SpectralMeasure64 = stable::SpectralMeasure<f64>;
pub type SampleBatch64 = mlp::SampleBatch<f64>;
pub type ConvergenceReport64 = stats::ConvergenceReport<f64>;
