//! Full-range BT.601 YCbCr, as used by JFIF.

use super::Image;
use crate::error::{Error, Result};

#[inline]
pub(crate) fn forward(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    (
        0.299 * r + 0.587 * g + 0.114 * b,
        128.0 - 0.168_735_892 * r - 0.331_264_108 * g + 0.5 * b,
        128.0 + 0.5 * r - 0.418_687_589 * g - 0.081_312_411 * b,
    )
}

#[inline]
pub(crate) fn inverse(y: f64, cb: f64, cr: f64) -> (f64, f64, f64) {
    let cb = cb - 128.0;
    let cr = cr - 128.0;
    (
        y + 1.402 * cr,
        y - 0.344_136_286 * cb - 0.714_136_286 * cr,
        y + 1.772 * cb,
    )
}

/// Unclamped in-place conversion of three equally sized planes.
pub(crate) fn convert_planes(
    p0: &mut [f64],
    p1: &mut [f64],
    p2: &mut [f64],
    f: fn(f64, f64, f64) -> (f64, f64, f64),
) {
    for ((a, b), c) in p0.iter_mut().zip(p1.iter_mut()).zip(p2.iter_mut()) {
        (*a, *b, *c) = f(*a, *b, *c);
    }
}

pub fn rgb_to_ycbcr(img: &Image) -> Result<Image> {
    convert(img, forward)
}

pub fn ycbcr_to_rgb(img: &Image) -> Result<Image> {
    convert(img, inverse)
}

fn convert(img: &Image, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) -> Result<Image> {
    if img.channels() != 3 {
        return Err(Error::Channel(format!(
            "color conversion needs 3 channels, got {}",
            img.channels()
        )));
    }
    let n = img.plane_len();
    let (p0, p1, p2) = (img.plane(0), img.plane(1), img.plane(2));
    let mut out = vec![0.0; 3 * n];
    for i in 0..n {
        let (a, b, c) = f(p0[i], p1[i], p2[i]);
        out[i] = a;
        out[n + i] = b;
        out[2 * n + i] = c;
    }
    Image::from_data_clamped(img.width(), img.height(), 3, out)
}
