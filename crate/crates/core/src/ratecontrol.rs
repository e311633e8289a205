//! PSNR-targeted compression for both codecs, and maximum compression.

use serde::{Deserialize, Serialize};

use crate::dct_codec::{dct_quantize_only, decode_dct, encode_dct, DctStream};
use crate::error::{Error, Result};
use crate::imagecore::{psnr, Decibels, Image};
use crate::wavelet_codec::{
    decode_embedded, decode_embedded_full, default_levels, encode_embedded, EmbeddedStream, Filter,
    DEFAULT_BASE_STEP,
};

pub const M_MIN: f64 = 0.05;
pub const M_MAX: f64 = 256.0;
pub const MAX_EVALUATIONS: usize = 60;
pub const DCT_TOLERANCE_DB: f64 = 0.01;
pub const WAVELET_TOLERANCE_DB: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Codec {
    Dct,
    Wavelet,
}

impl Codec {
    pub fn name(self) -> &'static str {
        match self {
            Codec::Dct => "dct",
            Codec::Wavelet => "wavelet",
        }
    }
}

impl std::fmt::Display for Codec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Codec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dct" | "jpeg" => Ok(Codec::Dct),
            "wavelet" | "jpeg2000" => Ok(Codec::Wavelet),
            _ => Err(Error::Parameter(format!("unknown codec {s:?}"))),
        }
    }
}

/// What to aim for and what to measure against. Without an explicit
/// reference, PSNR is measured against the image being compressed.
#[derive(Debug, Clone, Copy)]
pub struct RateTarget<'a> {
    pub target_db: f64,
    pub tolerance_db: f64,
    pub reference: Option<&'a Image>,
}

impl<'a> RateTarget<'a> {
    pub fn new(target_db: f64) -> Result<Self> {
        if !target_db.is_finite() || target_db < 0.0 {
            return Err(Error::Parameter(format!(
                "target must be finite and >= 0, got {target_db}"
            )));
        }
        Ok(RateTarget {
            target_db,
            tolerance_db: DCT_TOLERANCE_DB,
            reference: None,
        })
    }

    pub fn with_tolerance(mut self, tolerance_db: f64) -> Result<Self> {
        if !(tolerance_db > 0.0 && tolerance_db.is_finite()) {
            return Err(Error::Parameter(format!(
                "tolerance must be positive, got {tolerance_db}"
            )));
        }
        self.tolerance_db = tolerance_db;
        Ok(self)
    }

    pub fn with_reference(mut self, reference: &'a Image) -> Self {
        self.reference = Some(reference);
        self
    }
}

/// Codec parameter that produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Multiplier(f64),
    Offset(u64),
}

#[derive(Debug, Clone)]
pub struct CompressionResult {
    pub codec: Codec,
    /// Serialized stream (`DCX1` or a truncated `WVX1`).
    pub bytes: Vec<u8>,
    pub achieved_db: Decibels,
    pub byte_size: usize,
    /// Within tolerance of the target; always true for untargeted results.
    pub exact_hit: bool,
    pub setting: Setting,
    pub decoded: Image,
    /// Codec evaluations spent (bisection steps or decodes).
    pub evaluations: usize,
}

impl CompressionResult {
    /// Decodes `bytes` from scratch, independent of the cached image.
    pub fn decode(&self) -> Result<Image> {
        decode_bytes(self.codec, &self.bytes)
    }
}

/// Decodes a serialized stream of either codec.
pub fn decode_bytes(codec: Codec, bytes: &[u8]) -> Result<Image> {
    match codec {
        Codec::Dct => decode_dct(&DctStream::from_bytes(bytes)?),
        Codec::Wavelet => decode_embedded_full(&EmbeddedStream::from_bytes(bytes)?),
    }
}

fn dct_result(
    img: &Image,
    reference: &Image,
    m: f64,
    target: Option<&RateTarget>,
    evaluations: usize,
) -> Result<CompressionResult> {
    let stream = encode_dct(img, m, false)?;
    let bytes = stream.to_bytes();
    let decoded = decode_dct(&stream)?;
    let achieved_db = psnr(reference, &decoded)?;
    Ok(CompressionResult {
        codec: Codec::Dct,
        byte_size: bytes.len(),
        bytes,
        achieved_db,
        exact_hit: target
            .is_none_or(|t| (achieved_db.value() - t.target_db).abs() <= t.tolerance_db),
        setting: Setting::Multiplier(m),
        decoded,
        evaluations,
    })
}

/// Bisection on the multiplier, geometric midpoints, both ends probed
/// first. PSNR falls as the multiplier grows.
pub fn compress_to_psnr_dct(img: &Image, target: &RateTarget) -> Result<CompressionResult> {
    let reference = target.reference.unwrap_or(img);
    let t = target.target_db;
    let evaluations = std::cell::Cell::new(0);
    let eval = |m: f64| -> Result<f64> {
        evaluations.set(evaluations.get() + 1);
        Ok(psnr(reference, &dct_quantize_only(img, m)?)?.value())
    };
    let (p_best, p_worst) = (eval(M_MIN)?, eval(M_MAX)?);
    if t > p_best + target.tolerance_db || t < p_worst - target.tolerance_db {
        return Err(Error::Infeasible {
            target: t,
            low: p_worst,
            high: p_best,
        });
    }
    let mut closest = [(M_MIN, p_best), (M_MAX, p_worst)]
        .into_iter()
        .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
        .unwrap();
    let (mut lo, mut hi) = (M_MIN, M_MAX);
    while (closest.1 - t).abs() > target.tolerance_db && evaluations.get() < MAX_EVALUATIONS {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let p = eval(mid)?;
        if (p - t).abs() < (closest.1 - t).abs() {
            closest = (mid, p);
        }
        if p > t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    dct_result(img, reference, closest.0, Some(target), evaluations.get())
}

/// Wavelet codec settings used by the rate controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveletConfig {
    pub filter: Filter,
    /// Decomposition levels; `None` picks five or the most the size allows.
    pub levels: Option<usize>,
    pub base_step: f64,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        WaveletConfig {
            filter: Filter::Cdf97,
            levels: None,
            base_step: DEFAULT_BASE_STEP,
        }
    }
}

impl WaveletConfig {
    pub fn encode(&self, img: &Image) -> Result<EmbeddedStream> {
        let levels = self
            .levels
            .unwrap_or_else(|| default_levels(img.width(), img.height()));
        encode_embedded(img, levels, self.filter, self.base_step)
    }
}

fn wavelet_result(
    stream: &EmbeddedStream,
    offset: u64,
    reference: &Image,
    target: Option<f64>,
    evaluations: usize,
) -> Result<CompressionResult> {
    let cut = stream.truncated(offset)?;
    let bytes = cut.to_bytes();
    let decoded = decode_embedded_full(&EmbeddedStream::from_bytes(&bytes)?)?;
    let achieved_db = psnr(reference, &decoded)?;
    Ok(CompressionResult {
        codec: Codec::Wavelet,
        byte_size: bytes.len(),
        bytes,
        achieved_db,
        exact_hit: target.is_none_or(|t| {
            achieved_db >= Decibels::Finite(t) && achieved_db.value() - t <= WAVELET_TOLERANCE_DB
        }),
        setting: Setting::Offset(offset),
        decoded,
        evaluations,
    })
}

/// Encodes once and truncates at the earliest point reaching the target.
pub fn compress_to_psnr_wavelet(
    img: &Image,
    target: &RateTarget,
    config: &WaveletConfig,
) -> Result<CompressionResult> {
    let stream = config.encode(img)?;
    truncate_to_psnr(&stream, img, target)
}

/// Target selection on an existing stream encoded from `img`. When the
/// reference differs from `img`, table distortions do not apply and
/// offsets are searched by decoding, assuming PSNR rises with offset.
pub fn truncate_to_psnr(
    stream: &EmbeddedStream,
    img: &Image,
    target: &RateTarget,
) -> Result<CompressionResult> {
    let t = target.target_db;
    let goal = Decibels::Finite(t);
    let reference = target.reference.unwrap_or(img);
    let offsets: Vec<u64> = stream.offsets().collect();
    let mut evaluations = 0;
    let mut measure = |k: usize| -> Result<Decibels> {
        evaluations += 1;
        psnr(reference, &decode_embedded(stream, offsets[k])?)
    };
    let last = offsets.len() - 1;
    let same_reference = std::ptr::eq(reference, img) || reference == img;
    let (first_db, last_db) = if same_reference {
        (stream.truncation[0].psnr(), stream.truncation[last].psnr())
    } else {
        (measure(0)?, measure(last)?)
    };
    if goal > last_db || goal < first_db {
        return Err(Error::Infeasible {
            target: t,
            low: first_db.value(),
            high: last_db.value(),
        });
    }
    let chosen = if same_reference {
        stream
            .truncation
            .iter()
            .position(|p| p.psnr() >= goal)
            .unwrap_or(last)
    } else {
        // invariant: psnr(lo) < goal <= psnr(hi)
        if first_db >= goal {
            0
        } else {
            let (mut lo, mut hi) = (0, last);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if measure(mid)? >= goal {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        }
    };
    wavelet_result(stream, offsets[chosen], reference, Some(t), evaluations)
}

/// Smallest stream each codec produces: multiplier [`M_MAX`] for the DCT
/// codec, the first truncation point for the wavelet codec.
pub fn compress_max(
    img: &Image,
    codec: Codec,
    reference: Option<&Image>,
    config: &WaveletConfig,
) -> Result<CompressionResult> {
    let reference = reference.unwrap_or(img);
    match codec {
        Codec::Dct => dct_result(img, reference, M_MAX, None, 1),
        Codec::Wavelet => {
            let stream = config.encode(img)?;
            truncate_max(&stream, reference)
        }
    }
}

/// Maximum compression of an existing stream: its first truncation point.
pub fn truncate_max(stream: &EmbeddedStream, reference: &Image) -> Result<CompressionResult> {
    wavelet_result(stream, stream.truncation[0].offset, reference, None, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::natural_image;

    fn sample(seed: u64) -> Image {
        natural_image(seed, 0, 64, 1)
    }

    #[test]
    fn dct_hits_target_and_reproduces() {
        let img = sample(1);
        for t in [23.0, 28.0] {
            let target = RateTarget::new(t).unwrap();
            let r = compress_to_psnr_dct(&img, &target).unwrap();
            assert!(r.evaluations <= MAX_EVALUATIONS);
            assert_eq!(psnr(&img, &r.decode().unwrap()).unwrap(), r.achieved_db);
            assert_eq!(r.byte_size, r.bytes.len());
            if r.exact_hit {
                assert!((r.achieved_db.value() - t).abs() <= 0.01);
            }
        }
    }

    #[test]
    fn dct_infeasible_targets_fail_loudly() {
        let img = sample(2);
        let best = psnr(&img, &dct_quantize_only(&img, M_MIN).unwrap())
            .unwrap()
            .value();
        let err = compress_to_psnr_dct(&img, &RateTarget::new(best + 1.0).unwrap()).unwrap_err();
        match err {
            Error::Infeasible { high, .. } => assert_eq!(high, best),
            e => panic!("{e:?}"),
        }
        assert!(matches!(
            compress_to_psnr_dct(&img, &RateTarget::new(1.0).unwrap()),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn wavelet_overshoots_target() {
        let img = sample(3);
        let cfg = WaveletConfig::default();
        let r = compress_to_psnr_wavelet(&img, &RateTarget::new(25.0).unwrap(), &cfg).unwrap();
        assert!(r.achieved_db >= Decibels::Finite(25.0));
        assert_eq!(psnr(&img, &r.decode().unwrap()).unwrap(), r.achieved_db);
    }

    #[test]
    fn wavelet_final_point_target() {
        let img = sample(4);
        let cfg = WaveletConfig {
            base_step: 2.0,
            ..WaveletConfig::default()
        };
        let stream = cfg.encode(&img).unwrap();
        let fin = stream.final_point();
        let r =
            truncate_to_psnr(&stream, &img, &RateTarget::new(fin.psnr().value()).unwrap()).unwrap();
        assert_eq!(r.setting, Setting::Offset(fin.offset));
        assert!(r.exact_hit);
        let beyond = RateTarget::new(fin.psnr().value() + 0.5).unwrap();
        assert!(matches!(
            truncate_to_psnr(&stream, &img, &beyond),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn clean_reference_search_matches_table_search() {
        let img = sample(5);
        let cfg = WaveletConfig::default();
        let stream = cfg.encode(&img).unwrap();
        let copy = img.clone();
        let target = RateTarget::new(27.0).unwrap();
        let by_table = truncate_to_psnr(&stream, &img, &target).unwrap();
        let by_decode = truncate_to_psnr(&stream, &img, &target.with_reference(&copy)).unwrap();
        assert_eq!(by_table.setting, by_decode.setting);
    }

    #[test]
    fn max_compression_is_smallest() {
        let img = sample(6);
        let cfg = WaveletConfig::default();
        for codec in [Codec::Dct, Codec::Wavelet] {
            let max = compress_max(&img, codec, None, &cfg).unwrap();
            let t23 = match codec {
                Codec::Dct => compress_to_psnr_dct(&img, &RateTarget::new(23.0).unwrap()),
                Codec::Wavelet => {
                    compress_to_psnr_wavelet(&img, &RateTarget::new(23.0).unwrap(), &cfg)
                }
            }
            .unwrap();
            assert!(max.byte_size <= t23.byte_size, "{codec}");
        }
    }

    #[test]
    fn constant_image_max_compression() {
        let img = Image::filled(64, 64, 1, 77.0).unwrap();
        let cfg = WaveletConfig::default();
        let w = compress_max(&img, Codec::Wavelet, None, &cfg).unwrap();
        // only the leading bit of the DC coefficient (77 - 128 = -51) is
        // known, so the dead-zone midpoint is off by at most half of 51
        assert!(
            w.decoded.max_abs_diff(&img).unwrap() <= 25.5,
            "{}",
            w.achieved_db
        );
        assert!(w.byte_size < 80);
        let d = compress_max(&img, Codec::Dct, None, &cfg).unwrap();
        // the saturated DC step reconstructs every block at mid-gray
        assert!(d.decoded.data().iter().all(|&v| v == 128.0));
    }

    #[test]
    fn codec_names_parse() {
        assert_eq!("jpeg2000".parse::<Codec>().unwrap(), Codec::Wavelet);
        assert_eq!("dct".parse::<Codec>().unwrap(), Codec::Dct);
        assert!("png".parse::<Codec>().is_err());
    }
}
