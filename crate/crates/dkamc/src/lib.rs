//! Dual-driven automatic modulation classification at desk scale.
//!
//! The pipeline synthesizes labeled I/Q frames over an AWGN channel,
//! pretrains a multiscale visual encoder and a residual attribute
//! predictor, trains a small transformation subnet with a least-squares
//! embedding loss, and classifies frames by nearest class prototype in
//! visual-feature space. Everything is built on a minimal dense tensor
//! core with hand-wired reverse-mode gradients.

pub mod attributes;
pub mod config;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
