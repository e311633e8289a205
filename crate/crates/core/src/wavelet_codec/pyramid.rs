use serde::{Deserialize, Serialize};

use super::lifting::{forward53, forward97, inverse53, inverse53_linear, inverse97};
use crate::error::{Error, Result};
use crate::imagecore::Image;

/// Level shift applied before analysis so coefficients are zero-centred.
pub const LEVEL_SHIFT: f64 = 128.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Filter {
    /// Reversible integer 5/3.
    #[serde(rename = "5/3")]
    Le53,
    /// Irreversible CDF 9/7.
    #[serde(rename = "9/7")]
    Cdf97,
}

impl Filter {
    pub fn id(self) -> u8 {
        match self {
            Filter::Le53 => 0,
            Filter::Cdf97 => 1,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Filter::Le53),
            1 => Ok(Filter::Cdf97),
            _ => Err(Error::Format(format!("unknown filter id {id}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    LL,
    HL,
    LH,
    HH,
}

/// A rectangle of the Mallat layout. Level 1 is the finest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Subband {
    pub level: usize,
    pub orientation: Orientation,
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl Subband {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Plane indices in raster order.
    pub fn indices(&self, stride: usize) -> impl Iterator<Item = usize> + '_ {
        (self.y0..self.y0 + self.height)
            .flat_map(move |y| (self.x0..self.x0 + self.width).map(move |x| y * stride + x))
    }
}

/// Coarsest first: LL, then HL/LH/HH from level `levels` down to 1.
pub fn subbands(width: usize, height: usize, levels: usize) -> Vec<Subband> {
    let mut out = vec![Subband {
        level: levels,
        orientation: Orientation::LL,
        x0: 0,
        y0: 0,
        width: width >> levels,
        height: height >> levels,
    }];
    for level in (1..=levels).rev() {
        let (w, h) = (width >> level, height >> level);
        for (orientation, x0, y0) in [
            (Orientation::HL, w, 0),
            (Orientation::LH, 0, h),
            (Orientation::HH, w, h),
        ] {
            out.push(Subband {
                level,
                orientation,
                x0,
                y0,
                width: w,
                height: h,
            });
        }
    }
    out
}

/// Most decomposition levels a `width`x`height` image admits.
pub fn max_levels(width: usize, height: usize) -> usize {
    width.min(height).max(1).ilog2() as usize
}

/// Five levels, or fewer for small images.
pub fn default_levels(width: usize, height: usize) -> usize {
    max_levels(width, height).clamp(1, 5)
}

/// Multi-level decomposition of every channel, in Mallat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandPyramid {
    pub width: usize,
    pub height: usize,
    pub levels: usize,
    pub filter: Filter,
    pub planes: Vec<Vec<f64>>,
}

impl SubbandPyramid {
    pub fn subbands(&self) -> Vec<Subband> {
        subbands(self.width, self.height, self.levels)
    }

    pub fn band(&self, channel: usize, band: &Subband) -> Vec<f64> {
        band.indices(self.width)
            .map(|i| self.planes[channel][i])
            .collect()
    }

    pub fn coefficient_count(&self) -> usize {
        self.planes.iter().map(Vec::len).sum()
    }

    /// Squared synthesis gain of each subband, in [`SubbandPyramid::subbands`] order.
    pub fn energy_weights(&self) -> Vec<f64> {
        energy_weights(self.filter, self.levels)
    }
}

pub(crate) fn check_geometry(width: usize, height: usize, levels: usize) -> Result<()> {
    if levels == 0 || levels > max_levels(width, height) {
        return Err(Error::Parameter(format!(
            "{levels} levels invalid for {width}x{height} (max {})",
            max_levels(width, height)
        )));
    }
    let unit = 1usize << levels;
    if !width.is_multiple_of(unit) || !height.is_multiple_of(unit) {
        return Err(Error::Parameter(format!(
            "{width}x{height} is not padded to a multiple of {unit}"
        )));
    }
    Ok(())
}

/// Level-shifted Mallat decomposition: rows then columns at each level,
/// recursing on LL. The 5/3 path rounds samples to integers first.
pub fn decompose(img: &Image, levels: usize, filter: Filter) -> Result<SubbandPyramid> {
    let (w, h) = (img.width(), img.height());
    check_geometry(w, h, levels)?;
    let planes = img
        .planes()
        .map(|p| {
            let shifted: Vec<f64> = p.iter().map(|v| v - LEVEL_SHIFT).collect();
            analyze_plane(shifted, w, h, levels, filter)
        })
        .collect();
    Ok(SubbandPyramid {
        width: w,
        height: h,
        levels,
        filter,
        planes,
    })
}

/// Inverse of [`decompose`] including the level shift, unclamped.
pub fn reconstruct_planes(pyr: &SubbandPyramid) -> Result<Vec<Vec<f64>>> {
    check_geometry(pyr.width, pyr.height, pyr.levels)?;
    Ok(pyr
        .planes
        .iter()
        .map(|p| {
            let mut out = synthesize_plane(p, pyr.width, pyr.height, pyr.levels, pyr.filter);
            for v in &mut out {
                *v += LEVEL_SHIFT;
            }
            out
        })
        .collect())
}

/// [`reconstruct_planes`] clamped into an [`Image`].
pub fn reconstruct(pyr: &SubbandPyramid) -> Result<Image> {
    Image::from_planes(pyr.width, pyr.height, reconstruct_planes(pyr)?)
}

pub(crate) fn analyze_plane(
    plane: Vec<f64>,
    w: usize,
    h: usize,
    levels: usize,
    filter: Filter,
) -> Vec<f64> {
    match filter {
        Filter::Cdf97 => {
            let mut data = plane;
            transform_levels(&mut data, w, h, levels, false, forward97);
            data
        }
        Filter::Le53 => {
            let mut data: Vec<i64> = plane.iter().map(|v| v.round() as i64).collect();
            transform_levels(&mut data, w, h, levels, false, forward53);
            data.into_iter().map(|v| v as f64).collect()
        }
    }
}

pub(crate) fn synthesize_plane(
    coeffs: &[f64],
    w: usize,
    h: usize,
    levels: usize,
    filter: Filter,
) -> Vec<f64> {
    match filter {
        Filter::Cdf97 => {
            let mut data = coeffs.to_vec();
            transform_levels(&mut data, w, h, levels, true, inverse97);
            data
        }
        Filter::Le53 => {
            let mut data: Vec<i64> = coeffs.iter().map(|v| v.round() as i64).collect();
            transform_levels(&mut data, w, h, levels, true, inverse53);
            data.into_iter().map(|v| v as f64).collect()
        }
    }
}

/// Runs the separable 1-D `step` over rows and columns of each level.
/// Analysis goes fine to coarse, rows before columns; synthesis reverses both.
fn transform_levels<T: Copy + Default>(
    data: &mut [T],
    w: usize,
    h: usize,
    levels: usize,
    inverse: bool,
    step: fn(&mut [T]),
) {
    let mut scratch = vec![T::default(); w.max(h)];
    let order: Vec<usize> = if inverse {
        (0..levels).rev().collect()
    } else {
        (0..levels).collect()
    };
    for l in order {
        let (lw, lh) = (w >> l, h >> l);
        let rows = |data: &mut [T], scratch: &mut [T]| {
            for y in 0..lh {
                let row = &mut data[y * w..y * w + lw];
                line(row.iter_mut(), lw, inverse, step, scratch);
            }
        };
        let cols = |data: &mut [T], scratch: &mut [T]| {
            for x in 0..lw {
                line(
                    data[x..].iter_mut().step_by(w).take(lh),
                    lh,
                    inverse,
                    step,
                    scratch,
                );
            }
        };
        if inverse {
            cols(data, &mut scratch);
            rows(data, &mut scratch);
        } else {
            rows(data, &mut scratch);
            cols(data, &mut scratch);
        }
    }
}

/// Transforms one strided line between split layout (`[s | d]`) and the
/// interleaved layout the lifting steps operate on.
fn line<'a, T: Copy + Default + 'a>(
    samples: impl Iterator<Item = &'a mut T>,
    n: usize,
    inverse: bool,
    step: fn(&mut [T]),
    scratch: &mut [T],
) {
    let mut refs: Vec<&mut T> = samples.collect();
    let buf = &mut scratch[..n];
    let half = n.div_ceil(2);
    if inverse {
        for (i, v) in buf.iter_mut().enumerate() {
            *v = if i % 2 == 0 {
                *refs[i / 2]
            } else {
                *refs[half + i / 2]
            };
        }
        step(buf);
        for (r, v) in refs.iter_mut().zip(buf.iter()) {
            **r = *v;
        }
    } else {
        for (v, r) in buf.iter_mut().zip(refs.iter()) {
            *v = **r;
        }
        step(buf);
        for (i, v) in buf.iter().enumerate() {
            let dst = if i % 2 == 0 { i / 2 } else { half + i / 2 };
            *refs[dst] = *v;
        }
    }
}

/// Energy of the 1-D synthesis basis function for a low-pass (`high =
/// false`) or high-pass coefficient at `level`.
fn basis_energy(filter: Filter, level: usize, high: bool) -> f64 {
    let n = 64usize << level;
    let mut y = vec![0.0; n];
    // split layout at `level`: low band [0, n >> level), its detail next
    let band_len = n >> level;
    let pos = if high {
        band_len + band_len / 2
    } else {
        band_len / 2
    };
    y[pos] = 1.0;
    for l in (0..level).rev() {
        let len = n >> l;
        let half = len / 2;
        let mut inter: Vec<f64> = (0..len)
            .map(|i| {
                if i % 2 == 0 {
                    y[i / 2]
                } else {
                    y[half + i / 2]
                }
            })
            .collect();
        match filter {
            Filter::Cdf97 => inverse97(&mut inter),
            Filter::Le53 => inverse53_linear(&mut inter),
        }
        y[..len].copy_from_slice(&inter);
    }
    y.iter().map(|v| v * v).sum()
}

/// Squared synthesis gains (basis energy) per subband, coarsest first.
pub fn energy_weights(filter: Filter, levels: usize) -> Vec<f64> {
    let low: Vec<f64> = (0..=levels)
        .map(|l| basis_energy(filter, l, false))
        .collect();
    let high: Vec<f64> = (0..=levels)
        .map(|l| basis_energy(filter, l.max(1), true))
        .collect();
    let mut out = vec![low[levels] * low[levels]];
    for level in (1..=levels).rev() {
        out.push(high[level] * low[level]);
        out.push(low[level] * high[level]);
        out.push(high[level] * high[level]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Image {
        Image::from_fn(w, h, c, |_, _, _| rng.random_range(0..=255) as f64).unwrap()
    }

    #[test]
    fn constant_image_has_only_ll_energy() {
        let img = Image::filled(64, 64, 1, 200.0).unwrap();
        let pyr = decompose(&img, 3, Filter::Le53).unwrap();
        let bands = pyr.subbands();
        let ll = pyr.band(0, &bands[0]);
        assert!(ll.iter().all(|&v| v == ll[0]));
        for b in &bands[1..] {
            assert!(pyr.band(0, b).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn coefficient_count_is_conserved() {
        let img = Image::filled(96, 96, 1, 10.0).unwrap();
        let pyr = decompose(&img, 2, Filter::Cdf97).unwrap();
        assert_eq!(pyr.coefficient_count(), 9216);
        let total: usize = pyr.subbands().iter().map(Subband::len).sum();
        assert_eq!(total, 9216);
    }

    #[test]
    fn reversible_pyramid_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (w, h, l) in [(64, 64, 3), (32, 96, 5), (16, 8, 3), (8, 8, 3)] {
            let img = random_image(&mut rng, w, h, 3);
            let pyr = decompose(&img, l, Filter::Le53).unwrap();
            assert_eq!(reconstruct(&pyr).unwrap(), img);
        }
    }

    #[test]
    fn irreversible_pyramid_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let img = random_image(&mut rng, 128, 64, 1);
        let pyr = decompose(&img, 5, Filter::Cdf97).unwrap();
        let back = reconstruct_planes(&pyr).unwrap();
        for (a, b) in img.plane(0).iter().zip(&back[0]) {
            assert!((a - b).abs() <= 1e-5);
        }
    }

    #[test]
    fn geometry_errors() {
        let img = Image::filled(64, 32, 1, 0.0).unwrap();
        assert!(matches!(
            decompose(&img, 6, Filter::Cdf97),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            decompose(&img, 0, Filter::Cdf97),
            Err(Error::Parameter(_))
        ));
        let odd = Image::filled(36, 36, 1, 0.0).unwrap();
        assert!(decompose(&odd, 2, Filter::Le53).is_ok());
        assert!(matches!(
            decompose(&odd, 3, Filter::Le53),
            Err(Error::Parameter(_))
        ));
        assert_eq!(max_levels(256, 256), 8);
        assert_eq!(default_levels(256, 256), 5);
        assert_eq!(default_levels(8, 64), 3);
    }

    #[test]
    fn weights_match_impulse_energy() {
        // Oracle: synthesize a 2-D impulse placed in each subband and measure
        // the image-domain energy directly.
        for filter in [Filter::Cdf97, Filter::Le53] {
            let (w, h, levels) = (256, 256, 3);
            let weights = energy_weights(filter, levels);
            for (band, weight) in subbands(w, h, levels).iter().zip(&weights) {
                let mut coeffs = vec![0.0; w * h];
                let (cx, cy) = (band.x0 + band.width / 2, band.y0 + band.height / 2);
                coeffs[cy * w + cx] = 1.0;
                let energy: f64 = match filter {
                    Filter::Cdf97 => synthesize_plane(&coeffs, w, h, levels, filter)
                        .iter()
                        .map(|v| v * v)
                        .sum(),
                    Filter::Le53 => {
                        let mut data = coeffs.clone();
                        transform_levels(&mut data, w, h, levels, true, inverse53_linear);
                        data.iter().map(|v| v * v).sum()
                    }
                };
                assert!((energy - weight).abs() < 1e-9 * weight.max(1.0), "{band:?}");
            }
        }
    }
}
