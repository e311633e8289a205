use rayon::prelude::*;

use super::coder::{self, dequantize, Observer, Slot, Update};
use super::pyramid::{
    analyze_plane, check_geometry, energy_weights, max_levels, subbands, synthesize_plane, Filter,
    Subband, LEVEL_SHIFT,
};
use crate::error::{Error, Result};
use crate::imagecore::{color, mse, pad_to_multiple, Decibels, Image};

pub const MAGIC: &[u8; 4] = b"WVX1";
/// Header bytes before the truncation table.
const FIXED_HEAD: usize = 4 + 16 + 3 + 8 + 4;
const ENTRY_LEN: usize = 16;

/// Default base step: fine enough that the last truncation point is
/// visually lossless, so rate is chosen purely by truncation.
pub const DEFAULT_BASE_STEP: f64 = 1.0 / 64.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPoint {
    pub offset: u64,
    pub mse: f64,
}

impl TruncationPoint {
    pub fn psnr(&self) -> Decibels {
        Decibels::from_mse(self.mse)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedStream {
    pub width: u32,
    pub height: u32,
    pub padded_width: u32,
    pub padded_height: u32,
    pub channels: u8,
    pub filter: Filter,
    pub levels: u8,
    pub base_step: f64,
    pub truncation: Vec<TruncationPoint>,
    pub payload: Vec<u8>,
}

impl EmbeddedStream {
    pub fn header_len(&self) -> usize {
        FIXED_HEAD + ENTRY_LEN * self.truncation.len() + 8
    }

    pub fn byte_len(&self) -> usize {
        self.header_len() + self.payload.len()
    }

    pub fn offsets(&self) -> impl Iterator<Item = u64> + '_ {
        self.truncation.iter().map(|t| t.offset)
    }

    pub fn final_point(&self) -> TruncationPoint {
        *self
            .truncation
            .last()
            .expect("validated streams have a table")
    }

    /// A standalone stream holding only the payload prefix up to `offset`,
    /// with that single truncation point.
    pub fn truncated(&self, offset: u64) -> Result<EmbeddedStream> {
        let point = self.point(offset)?;
        Ok(EmbeddedStream {
            truncation: vec![point],
            payload: self.payload[..offset as usize].to_vec(),
            ..self.clone()
        })
    }

    fn point(&self, offset: u64) -> Result<TruncationPoint> {
        self.truncation
            .iter()
            .find(|t| t.offset == offset)
            .copied()
            .ok_or_else(|| Error::Parameter(format!("{offset} is not a truncation offset")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(MAGIC);
        for v in [
            self.width,
            self.height,
            self.padded_width,
            self.padded_height,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&[self.channels, self.filter.id(), self.levels]);
        out.extend_from_slice(&self.base_step.to_le_bytes());
        out.extend_from_slice(&(self.truncation.len() as u32).to_le_bytes());
        for t in &self.truncation {
            out.extend_from_slice(&t.offset.to_le_bytes());
            out.extend_from_slice(&t.mse.to_le_bytes());
        }
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing WVX1 magic".into()));
        }
        if bytes.len() < FIXED_HEAD {
            return Err(Error::Format("WVX1 header truncated".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let count = u32_at(31) as usize;
        let table_end = FIXED_HEAD + ENTRY_LEN * count;
        if bytes.len() < table_end + 8 {
            return Err(Error::Format("WVX1 truncation table truncated".into()));
        }
        let truncation = (0..count)
            .map(|k| {
                let at = FIXED_HEAD + ENTRY_LEN * k;
                TruncationPoint {
                    offset: u64_at(at),
                    mse: f64::from_bits(u64_at(at + 8)),
                }
            })
            .collect();
        let len = u64_at(table_end);
        let available = (bytes.len() - table_end - 8) as u64;
        if len > available {
            return Err(Error::decode(
                bytes.len(),
                format!("payload truncated: header says {len} bytes, {available} present"),
            ));
        }
        if len < available {
            return Err(Error::Format(format!("{} trailing bytes", available - len)));
        }
        let stream = EmbeddedStream {
            width: u32_at(4),
            height: u32_at(8),
            padded_width: u32_at(12),
            padded_height: u32_at(16),
            channels: bytes[20],
            filter: Filter::from_id(bytes[21])?,
            levels: bytes[22],
            base_step: f64::from_le_bytes(bytes[23..31].try_into().unwrap()),
            truncation,
            payload: bytes[table_end + 8..].to_vec(),
        };
        stream.validate()?;
        Ok(stream)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Format(m));
        if !matches!(self.channels, 1 | 3) {
            return bad(format!("unsupported channel count {}", self.channels));
        }
        if !(self.base_step.is_finite() && self.base_step > 0.0) {
            return bad(format!("invalid base step {}", self.base_step));
        }
        let (w, h) = (self.width as usize, self.height as usize);
        let (pw, ph) = (self.padded_width as usize, self.padded_height as usize);
        let levels = self.levels as usize;
        if w == 0 || h == 0 || levels == 0 || levels > max_levels(w, h) {
            return bad(format!("{levels} levels invalid for {w}x{h}"));
        }
        let unit = 1 << levels;
        if pw != w.next_multiple_of(unit) || ph != h.next_multiple_of(unit) {
            return bad(format!("padded size {pw}x{ph} inconsistent with {w}x{h}"));
        }
        if self.truncation.is_empty() {
            return bad("empty truncation table".into());
        }
        let mut prev: Option<&TruncationPoint> = None;
        for t in &self.truncation {
            if t.offset == 0
                || t.offset > self.payload.len() as u64
                || t.mse.is_nan()
                || t.mse < 0.0
            {
                return bad(format!("invalid truncation point {t:?}"));
            }
            if let Some(p) = prev {
                if t.offset <= p.offset || t.mse > p.mse {
                    return bad("truncation table not monotone".into());
                }
            }
            prev = Some(t);
        }
        Ok(())
    }
}

/// Geometry and quantization shared by encoder and decoder.
struct Layout {
    width: usize,
    height: usize,
    padded_width: usize,
    padded_height: usize,
    channels: usize,
    levels: usize,
    filter: Filter,
    /// Subbands in coding order.
    bands: Vec<Subband>,
    /// Squared synthesis gain per band, coding order.
    energy: Vec<f64>,
    steps: Vec<f64>,
}

impl Layout {
    fn new(
        width: usize,
        height: usize,
        channels: usize,
        levels: usize,
        filter: Filter,
        base_step: f64,
    ) -> Result<Self> {
        if !(base_step.is_finite() && base_step > 0.0) {
            return Err(Error::Parameter(format!(
                "base step must be positive, got {base_step}"
            )));
        }
        if !matches!(channels, 1 | 3) {
            return Err(Error::Channel(format!(
                "expected 1 or 3 channels, got {channels}"
            )));
        }
        if levels == 0 || levels > max_levels(width, height) {
            return Err(Error::Parameter(format!(
                "{levels} levels invalid for {width}x{height} (max {})",
                max_levels(width, height)
            )));
        }
        let unit = 1 << levels;
        let (pw, ph) = (width.next_multiple_of(unit), height.next_multiple_of(unit));
        check_geometry(pw, ph, levels)?;
        let energy = energy_weights(filter, levels);
        let quant_weight = |k: usize| match filter {
            Filter::Cdf97 => energy[k],
            Filter::Le53 => 1.0,
        };
        let mut order: Vec<usize> = (0..energy.len()).collect();
        order.sort_by(|&a, &b| quant_weight(b).total_cmp(&quant_weight(a)));
        let all = subbands(pw, ph, levels);
        Ok(Layout {
            width,
            height,
            padded_width: pw,
            padded_height: ph,
            channels,
            levels,
            filter,
            bands: order.iter().map(|&k| all[k]).collect(),
            steps: order
                .iter()
                .map(|&k| base_step / quant_weight(k).sqrt())
                .collect(),
            energy: order.iter().map(|&k| energy[k]).collect(),
        })
    }

    fn from_stream(s: &EmbeddedStream) -> Result<Self> {
        s.validate()?;
        Layout::new(
            s.width as usize,
            s.height as usize,
            s.channels as usize,
            s.levels as usize,
            s.filter,
            s.base_step,
        )
    }

    fn slot_count(&self) -> usize {
        self.bands.len() * self.channels
    }

    /// Slot order is band-major: every channel of a band before the next band.
    fn slot(&self, band: usize, channel: usize) -> usize {
        band * self.channels + channel
    }

    fn exact(&self, band: usize) -> bool {
        self.filter == Filter::Le53 && self.steps[band] == 1.0
    }

    /// Color transform, level shift and wavelet analysis, gathered by slot.
    fn analyze(&self, img: &Image) -> Result<Vec<Vec<f64>>> {
        let padded = pad_to_multiple(img, 1 << self.levels)?.image;
        debug_assert_eq!(padded.width(), self.padded_width);
        let mut planes: Vec<Vec<f64>> = padded.planes().map(<[f64]>::to_vec).collect();
        to_components(&mut planes, self.filter);
        let (pw, ph) = (self.padded_width, self.padded_height);
        let coeffs: Vec<Vec<f64>> = planes
            .into_par_iter()
            .map(|p| analyze_plane(p, pw, ph, self.levels, self.filter))
            .collect();
        let mut slots = vec![Vec::new(); self.slot_count()];
        for (b, band) in self.bands.iter().enumerate() {
            for (c, plane) in coeffs.iter().enumerate() {
                slots[self.slot(b, c)] = band.indices(pw).map(|i| plane[i]).collect();
            }
        }
        Ok(slots)
    }

    fn quantize(&self, coeffs: &[Vec<f64>]) -> Vec<Slot> {
        coeffs
            .iter()
            .enumerate()
            .map(|(s, c)| {
                let band = s / self.channels;
                let step = self.steps[band];
                Slot {
                    mags: c.iter().map(|v| (v.abs() / step).floor() as u64).collect(),
                    neg: c.iter().map(|v| *v < 0.0).collect(),
                    step,
                    exact: self.exact(band),
                }
            })
            .collect()
    }

    /// Slots carrying sizes and steps only, for the decoder.
    fn empty_slots(&self) -> Vec<Slot> {
        (0..self.slot_count())
            .map(|s| {
                let band = s / self.channels;
                Slot {
                    mags: vec![0; self.bands[band].len()],
                    neg: Vec::new(),
                    step: self.steps[band],
                    exact: self.exact(band),
                }
            })
            .collect()
    }

    /// Scatter, synthesize, undo the color transform, crop and clamp.
    fn render(&self, values: &[Vec<f64>]) -> Result<Image> {
        let (pw, ph) = (self.padded_width, self.padded_height);
        let mut planes = vec![vec![0.0; pw * ph]; self.channels];
        for (b, band) in self.bands.iter().enumerate() {
            for (c, plane) in planes.iter_mut().enumerate() {
                for (i, v) in band.indices(pw).zip(&values[self.slot(b, c)]) {
                    plane[i] = *v;
                }
            }
        }
        let mut planes: Vec<Vec<f64>> = planes
            .into_iter()
            .map(|p| synthesize_plane(&p, pw, ph, self.levels, self.filter))
            .collect();
        from_components(&mut planes, self.filter);
        Image::from_planes(pw, ph, planes)?.crop(self.width, self.height)
    }
}

/// Centres samples on zero. Color goes through YCbCr, or through the
/// reversible integer transform on the 5/3 path so that path stays lossless.
fn to_components(planes: &mut [Vec<f64>], filter: Filter) {
    match (planes, filter) {
        ([p0, p1, p2], Filter::Le53) => {
            for ((r, g), b) in p0.iter_mut().zip(p1.iter_mut()).zip(p2.iter_mut()) {
                let (ri, gi, bi) = (r.round() as i64, g.round() as i64, b.round() as i64);
                *r = ((ri + 2 * gi + bi).div_euclid(4) - 128) as f64;
                *g = (bi - gi) as f64;
                *b = (ri - gi) as f64;
            }
        }
        ([p0, p1, p2], Filter::Cdf97) => {
            color::convert_planes(p0, p1, p2, color::forward);
            shift(&mut [p0, p1, p2], -LEVEL_SHIFT);
        }
        (planes, _) => {
            for p in planes.iter_mut() {
                p.iter_mut().for_each(|v| *v -= LEVEL_SHIFT);
            }
        }
    }
}

fn from_components(planes: &mut [Vec<f64>], filter: Filter) {
    match (planes, filter) {
        ([p0, p1, p2], Filter::Le53) => {
            for ((y, u), v) in p0.iter_mut().zip(p1.iter_mut()).zip(p2.iter_mut()) {
                let (yi, ui, vi) = (*y as i64 + 128, *u as i64, *v as i64);
                let g = yi - (ui + vi).div_euclid(4);
                (*y, *u, *v) = ((vi + g) as f64, g as f64, (ui + g) as f64);
            }
        }
        ([p0, p1, p2], Filter::Cdf97) => {
            shift(&mut [p0, p1, p2], LEVEL_SHIFT);
            color::convert_planes(p0, p1, p2, color::inverse);
        }
        (planes, _) => {
            for p in planes.iter_mut() {
                p.iter_mut().for_each(|v| *v += LEVEL_SHIFT);
            }
        }
    }
}

fn shift(planes: &mut [&mut Vec<f64>], by: f64) {
    for p in planes {
        p.iter_mut().for_each(|v| *v += by);
    }
}

/// Minimum estimated PSNR gain between neighbouring truncation candidates.
fn spacing(db: f64) -> f64 {
    if db < 40.0 {
        0.05
    } else if db < 60.0 {
        0.5
    } else {
        2.0
    }
}

/// Tracks the decoder-visible reconstruction while encoding, proposes
/// truncation offsets from a weighted-error estimate and measures each
/// proposal by rendering the exact reconstruction a decoder would produce.
struct Recorder<'a> {
    layout: &'a Layout,
    reference: &'a Image,
    coeffs: &'a [Vec<f64>],
    values: Vec<Vec<f64>>,
    sse: f64,
    samples: f64,
    last_db: Option<f64>,
    pending: Option<u64>,
    batch: Vec<(u64, Vec<Vec<f64>>)>,
    points: Vec<TruncationPoint>,
    error: Option<Error>,
}

impl<'a> Recorder<'a> {
    fn new(layout: &'a Layout, reference: &'a Image, coeffs: &'a [Vec<f64>]) -> Self {
        let sse = coeffs
            .iter()
            .enumerate()
            .map(|(s, c)| layout.energy[s / layout.channels] * c.iter().map(|v| v * v).sum::<f64>())
            .sum();
        let samples = coeffs.iter().map(Vec::len).sum::<usize>() as f64;
        Recorder {
            layout,
            reference,
            coeffs,
            values: coeffs.iter().map(|c| vec![0.0; c.len()]).collect(),
            sse,
            samples,
            last_db: None,
            pending: None,
            batch: Vec::new(),
            points: Vec::new(),
            error: None,
        }
    }

    fn estimate_db(&self) -> f64 {
        let mse = self.sse.max(0.0) / self.samples;
        if mse <= 0.0 {
            f64::INFINITY
        } else {
            10.0 * (255.0f64 * 255.0 / mse).log10()
        }
    }

    fn propose(&mut self, bit_len: u64) {
        self.pending = Some(bit_len.div_ceil(8));
        self.last_db = Some(self.estimate_db());
    }

    fn snapshot(&mut self, offset: u64) {
        if self.points.last().map(|p| p.offset) == Some(offset)
            || self.batch.last().map(|b| b.0) == Some(offset)
        {
            return;
        }
        self.batch.push((offset, self.values.clone()));
        if self.batch.len() >= 2 * rayon::current_num_threads() {
            self.flush();
        }
    }

    fn flush(&mut self) {
        let batch = std::mem::take(&mut self.batch);
        let measured: Vec<Result<TruncationPoint>> = batch
            .into_par_iter()
            .map(|(offset, values)| {
                let img = self.layout.render(&values)?;
                Ok(TruncationPoint {
                    offset,
                    mse: mse(self.reference, &img)?,
                })
            })
            .collect();
        for m in measured {
            match m {
                Ok(p) => self.points.push(p),
                Err(e) => {
                    self.error.get_or_insert(e);
                }
            }
        }
    }

    fn finish(mut self, payload_len: u64) -> Result<Vec<TruncationPoint>> {
        self.snapshot(payload_len);
        self.flush();
        if let Some(e) = self.error {
            return Err(e);
        }
        Ok(monotone(self.points))
    }
}

impl Observer for Recorder<'_> {
    fn symbol(&mut self, bit_len: u64, updates: &[Update]) {
        if let Some(offset) = self.pending {
            if bit_len > 8 * offset {
                self.pending = None;
                self.snapshot(offset);
            }
        }
        for &(s, i, v) in updates {
            let c = self.coeffs[s][i];
            let w = self.layout.energy[s / self.layout.channels];
            let old = self.values[s][i];
            self.sse += w * ((c - v).powi(2) - (c - old).powi(2));
            self.values[s][i] = v;
        }
        if let Some(last) = self.last_db {
            if !updates.is_empty() && self.estimate_db() >= last + spacing(last) {
                self.propose(bit_len);
            }
        }
    }

    fn plane_done(&mut self, bit_len: u64) {
        if self.last_db.is_none() {
            self.propose(bit_len);
        }
    }
}

/// Keeps the final point and every earlier point that is no better than
/// all later kept points.
fn monotone(points: Vec<TruncationPoint>) -> Vec<TruncationPoint> {
    let mut kept: Vec<TruncationPoint> = Vec::with_capacity(points.len());
    for p in points.into_iter().rev() {
        if kept
            .last()
            .is_none_or(|k| p.mse >= k.mse && p.offset < k.offset)
        {
            kept.push(p);
        }
    }
    kept.reverse();
    kept
}

/// Encodes once and records truncation points with measured MSE against
/// `img`. `levels` must not exceed `floor(log2(min(width, height)))`.
pub fn encode_embedded(
    img: &Image,
    levels: usize,
    filter: Filter,
    base_step: f64,
) -> Result<EmbeddedStream> {
    let layout = Layout::new(
        img.width(),
        img.height(),
        img.channels(),
        levels,
        filter,
        base_step,
    )?;
    let coeffs = layout.analyze(img)?;
    let slots = layout.quantize(&coeffs);
    let mut recorder = Recorder::new(&layout, img, &coeffs);
    let payload = coder::encode(&slots, &mut recorder)?;
    let truncation = recorder.finish(payload.len() as u64)?;
    Ok(EmbeddedStream {
        width: img.width() as u32,
        height: img.height() as u32,
        padded_width: layout.padded_width as u32,
        padded_height: layout.padded_height as u32,
        channels: img.channels() as u8,
        filter,
        levels: levels as u8,
        base_step,
        truncation,
        payload,
    })
}

/// Decodes the payload prefix ending at a recorded truncation offset.
pub fn decode_embedded(stream: &EmbeddedStream, offset: u64) -> Result<Image> {
    let layout = Layout::from_stream(stream)?;
    stream.point(offset)?;
    let decoded = coder::decode(&stream.payload, offset as usize, &layout.empty_slots())?;
    layout.render(&decoded)
}

/// Decodes at the last truncation offset.
pub fn decode_embedded_full(stream: &EmbeddedStream) -> Result<Image> {
    decode_embedded(stream, stream.final_point().offset)
}

/// Analysis, dead-zone quantization, midpoint dequantization and synthesis
/// without any bit-plane coding.
pub fn wavelet_quantize_only(
    img: &Image,
    levels: usize,
    filter: Filter,
    base_step: f64,
) -> Result<Image> {
    let layout = Layout::new(
        img.width(),
        img.height(),
        img.channels(),
        levels,
        filter,
        base_step,
    )?;
    let slots = layout.quantize(&layout.analyze(img)?);
    let values: Vec<Vec<f64>> = slots
        .iter()
        .map(|s| {
            s.mags
                .iter()
                .zip(&s.neg)
                .map(|(&m, &n)| dequantize(m, 0, n, s.step, s.exact))
                .collect()
        })
        .collect();
    layout.render(&values)
}
