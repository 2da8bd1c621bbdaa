//! Kinetic radiative transfer driven by a fast Markovian source, its
//! stochastic Rosseland limit, and numerical checks of the convergence.
//!
//! The library is organised by layer: [`model`] and [`noise`] hold the data,
//! [`kinetic`] and [`limit`] the two solvers, [`correctors`] the
//! perturbed-test-function machinery and [`harness`] the Monte Carlo studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod correctors;
pub mod error;
pub mod harness;
pub mod kinetic;
pub mod limit;
pub mod model;
pub mod noise;
pub mod spectral;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/kinetic.md")]
    mod kinetic {}
    #[doc = include_str!("../../../book/src/limit.md")]
    mod limit {}
    #[doc = include_str!("../../../book/src/correctors.md")]
    mod correctors {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
