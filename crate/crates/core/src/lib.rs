//! Compression as an adversarial defense, at desk scale.
//!
//! The crate bundles everything needed to run the experiment end to end:
//! a small differentiable classifier, FGSM/BIM attacks, an 8x8 DCT codec
//! and an embedded wavelet codec, PSNR-targeted rate control, and the
//! harness that fills the accuracy grid.

pub mod attacks;
pub mod bitio;
pub mod dataset;
pub mod dct_codec;
pub mod error;
pub mod harness;
pub mod imagecore;
pub mod model;
pub mod ratecontrol;
pub mod wavelet_codec;

pub use error::{Error, Result};
pub use imagecore::{Decibels, Image};
