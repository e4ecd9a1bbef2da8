//! Simulation and analysis of time-correlated single-photon-counting (TCSPC)
//! fluorescence decay histograms.
//!
//! The crate is split by task:
//!
//! - [`spectral`]: survival amplitude, survival probability and decay
//!   intensity of an unstable state computed from its energy distribution
//!   (natural units, ħ = 1, time in ns, energy in ns⁻¹).
//! - [`models`]: the phenomenological two-exponential and
//!   exponential-plus-power-law intensity models.
//! - [`synth`]: synthetic histograms with Poisson noise and optional
//!   Gaussian instrument response.
//! - [`fitter`]: Pearson χ² minimization with covariance from the
//!   Gauss-Newton Hessian.
//! - [`combine`]: inverse-variance combination of per-channel estimates.
//! - [`presets`]: reference parameter sets for acridine orange.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod combine;
pub mod error;
pub mod fitter;
pub mod histogram;
pub mod models;
pub mod presets;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
pub use histogram::Histogram;
pub use models::{DecayModel, ModelKind, NonExpParams, TwoExpParams};
