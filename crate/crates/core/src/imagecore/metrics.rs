use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{rgb_to_ycbcr, Image};
use crate::error::{Error, Result};

/// Peak sample value for PSNR, fixed by the 8-bit sample semantics.
pub const PEAK: f64 = 255.0;

/// A PSNR value, with a distinguished state for identical images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decibels {
    Finite(f64),
    Lossless,
}

impl Decibels {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Decibels::Finite(value))
        } else if value == f64::INFINITY {
            Ok(Decibels::Lossless)
        } else {
            Err(Error::Parameter(format!("{value} is not a valid dB value")))
        }
    }

    pub fn from_mse(mse: f64) -> Self {
        if mse <= 0.0 {
            Decibels::Lossless
        } else {
            Decibels::Finite((10.0 * (PEAK * PEAK / mse).log10()).max(0.0))
        }
    }

    /// The value in dB; `+inf` for the lossless state.
    pub fn value(self) -> f64 {
        match self {
            Decibels::Finite(v) => v,
            Decibels::Lossless => f64::INFINITY,
        }
    }

    pub fn is_lossless(self) -> bool {
        matches!(self, Decibels::Lossless)
    }
}

impl PartialOrd for Decibels {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self, other) {
            (Decibels::Lossless, Decibels::Lossless) => Some(Ordering::Equal),
            (Decibels::Lossless, _) => Some(Ordering::Greater),
            (_, Decibels::Lossless) => Some(Ordering::Less),
            (Decibels::Finite(a), Decibels::Finite(b)) => a.partial_cmp(b),
        }
    }
}

impl fmt::Display for Decibels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decibels::Finite(v) => write!(f, "{v:.4} dB"),
            Decibels::Lossless => f.write_str("lossless"),
        }
    }
}

impl Serialize for Decibels {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Decibels::Finite(v) => s.serialize_f64(*v),
            Decibels::Lossless => s.serialize_str("lossless"),
        }
    }
}

impl<'de> Deserialize<'de> for Decibels {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Decibels::new(v).map_err(serde::de::Error::custom),
            Repr::Text(t) if t == "lossless" => Ok(Decibels::Lossless),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad dB value {t:?}"))),
        }
    }
}

/// Mean squared error over every sample of every channel.
pub fn mse(reference: &Image, test: &Image) -> Result<f64> {
    if !reference.same_shape(test) {
        return Err(Error::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            reference.width(),
            reference.height(),
            reference.channels(),
            test.width(),
            test.height(),
            test.channels()
        )));
    }
    let sum: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.data().len() as f64)
}

pub fn psnr(reference: &Image, test: &Image) -> Result<Decibels> {
    mse(reference, test).map(Decibels::from_mse)
}

/// Excess mean absolute neighbor difference across 8-aligned block
/// boundaries over the same statistic inside blocks, clamped at zero.
///
/// Measured on luma; color input is converted to YCbCr first.
pub fn blockiness(img: &Image) -> Result<f64> {
    let (w, h) = (img.width(), img.height());
    if w < 9 || h < 9 {
        return Err(Error::Size(format!("blockiness needs >= 9x9, got {w}x{h}")));
    }
    let luma;
    let plane = if img.channels() == 3 {
        luma = rgb_to_ycbcr(img)?;
        luma.plane(0)
    } else {
        img.plane(0)
    };

    let (mut edge_sum, mut edge_n) = (0.0, 0usize);
    let (mut inner_sum, mut inner_n) = (0.0, 0usize);
    let mut tally = |boundary: bool, d: f64| {
        if boundary {
            edge_sum += d;
            edge_n += 1;
        } else {
            inner_sum += d;
            inner_n += 1;
        }
    };
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w - 1 {
            tally((x + 1) % 8 == 0, (row[x + 1] - row[x]).abs());
        }
    }
    for y in 0..h - 1 {
        for x in 0..w {
            tally(
                (y + 1) % 8 == 0,
                (plane[(y + 1) * w + x] - plane[y * w + x]).abs(),
            );
        }
    }
    let score = edge_sum / edge_n as f64 - inner_sum / inner_n as f64;
    Ok(score.max(0.0))
}
