//! Nonparametric Bayesian multiscale inference on `[0, 1]` with Haar wavelets.
//!
//! The crate covers the coefficient representation ([`wavelet`]), multiscale norms and
//! Gaussian limit processes ([`multiscale`]), observation models ([`sampling`]), prior
//! families and their posterior samplers ([`priors`]), credible sets ([`bands`]) and a Monte
//! Carlo harness checking frequentist properties of the posterior ([`harness`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bands;
pub mod config;
pub mod error;
pub mod harness;
pub mod multiscale;
pub mod numeric;
pub mod priors;
pub mod rng;
pub mod sampling;
pub mod stats;
pub mod truth;
pub mod wavelet;

pub use error::{Error, Result};
