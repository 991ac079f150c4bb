//! Directional-statistics tracking and location-aware speaker diarization.
//!
//! The crate is `no_std` and only needs an allocator. It provides:
//!
//! * [`circular`]: angles, von Mises densities, Bessel ratios and sampling.
//! * [`ssl`]: sound-source-localisation (SSL) frames, DOA extraction and the
//!   equivalent von Mises summary of an SSL frame.
//! * [`tracker`]: a von Mises Kalman filter that scores DOA/SSL sequences.
//! * [`em`]: grid-quadrature EM estimation of the two filter concentrations.
//! * [`ahc`]: agglomerative clustering with speaker, SSL-KL and tracking affinities.
//! * [`sim`]: a synthetic meeting generator with ground truth.
//! * [`eval`]: Hungarian assignment and frame-level clustering error.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod ahc;
pub mod circular;
pub mod em;
mod error;
pub mod eval;
mod math;
pub mod rng;
pub mod sim;
pub mod ssl;
pub mod tracker;

pub use error::{Error, Result};

/// Frame resolution of tracking windows, in seconds.
pub const FRAME_SEC: f64 = 0.4;
