//! Numerical core for single-shot off-axis digital holographic microscopy of
//! cell nuclei.
//!
//! The crate covers the whole processing chain without touching the file
//! system:
//!
//! * [`field`] and [`fft`]: 2D real/complex fields, unitary FFT, forward
//!   differences and their adjoint.
//! * [`holo`]: phantom nuclei and off-axis hologram synthesis.
//! * [`recon`]: reference calibration, Fourier-filter baseline and the
//!   Huber-regularized optimization reconstruction.
//! * [`unwrap`]: least-squares phase unwrapping.
//! * [`segment`]: brightfield nucleus segmentation.
//! * [`features`]: brightfield and phase morphometry of one nucleus.
//! * [`analyze`]: standardization, correlation PCA, eigenvector stability,
//!   KMO adequacy and silhouette scores.
//!
//! Everything is `no_std` + `alloc`. IO, configuration and the command line
//! live in the `holocyte` crate.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analyze;
pub mod error;
pub mod features;
pub mod fft;
pub mod field;
pub mod holo;
pub mod linalg;
pub mod metrics;
pub mod recon;
pub mod resample;
pub mod segment;
pub mod unwrap;

pub use error::{Error, Result};
pub use field::{ComplexField, Field, Grid, RealField, RgbImage};
pub use num_complex::Complex64;
