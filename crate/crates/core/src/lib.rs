//! Block-DCT ("spatial frequency") feature extraction for small CNNs, PGD
//! attacks in the pixel and frequency domains, and the diagnostics used to
//! compare frequency-stem models against learned-stem twins.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: f32 tensors, a recording tape with reverse-mode
//!   differentiation, Adam and Glorot initialisation.
//! * [`spectral`]: DCT kernel table, zigzag order, block transforms and the
//!   fixed 192-filter kernel bank.
//! * [`models`]: the SF / C88 / Baseline / mixture model family on a shared
//!   residual backbone, with training and evaluation.
//! * [`attacks`]: pixel and frequency PGD, transfer attacks and adversarial
//!   training.
//! * [`analysis`]: cosine probes, frequency histograms, the decision-tree
//!   detector and low/high frequency reconstruction evaluation.
//! * [`data`]: datasets, checkpoints, run configuration and reports.

pub mod analysis;
pub mod attacks;
pub mod data;
mod error;
pub mod models;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Rng, Tensor};
