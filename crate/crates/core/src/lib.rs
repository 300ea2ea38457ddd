//! Frequency recalibration toolkit: aligns the Fourier spectra of synthetic
//! images with a corpus of real ones, and measures the alignment.

pub mod cli;
pub mod desk;
pub mod diff;
pub mod error;
pub mod fft;
pub mod image;
pub mod manifest;
pub mod probe;
pub mod retrieval;
pub mod rhm;
pub mod seed;
pub mod shr;
pub mod spectral;

pub use error::{Error, Result};
