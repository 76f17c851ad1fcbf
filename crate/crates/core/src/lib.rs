//! Self-supervised syllabic unit discovery from speech.
//!
//! The pipeline perturbs speakers, trains a transformer encoder with a
//! bootstrap-your-own-latent objective, segments frame features with a
//! normalized-cut dynamic program and clusters the pooled segments into
//! syllable-like units.

// `!(x >= 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// The numeric kernels index several arrays with one loop variable.
#![allow(clippy::needless_range_loop)]

pub mod clusterer;
pub mod config;
pub mod dsp;
pub mod error;
pub mod evaluator;
pub mod featurize;
pub mod io;
pub mod neural;
pub mod pipeline;
pub mod plot;
pub mod segmenter;
pub mod synth;
pub mod trainer;

pub use config::Config;
pub use error::{Error, Result};
