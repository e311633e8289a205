//! Planar image raster, color conversion, padding, quality metrics and
//! Netpbm I/O shared by the attacks, codecs and classifier.

pub(crate) mod color;
mod image;
mod metrics;
mod pnm;

pub use color::{rgb_to_ycbcr, ycbcr_to_rgb};
pub use image::{pad_to_multiple, Image, Padded};
pub use metrics::{blockiness, mse, psnr, Decibels, PEAK};
pub use pnm::{decode_pnm, encode_pnm, read_labels, read_pnm, write_labels, write_pnm};
