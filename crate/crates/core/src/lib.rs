//! Continued fraction neural networks and the tooling around them: a
//! scalar reverse-mode tape, model families, Adam training, target
//! functions, dataset generators, residual spectra and feature attribution.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision.

// `!(x > 0.0)` style guards are written so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod autodiff;
pub mod datagen;
pub mod error;
pub mod funcs;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tape64 = autodiff::Tape<f64>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Model64 = models::Model<f64>;
pub type Model32 = models::Model<f32>;
pub type Dataset64 = datagen::Dataset<f64>;
pub type Dataset32 = datagen::Dataset<f32>;
pub type Samples64 = datagen::Samples<f64>;
pub type Samples32 = datagen::Samples<f32>;
