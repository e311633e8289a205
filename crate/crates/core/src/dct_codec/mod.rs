//! JPEG-style block codec: 8x8 DCT, Annex K tables scaled by a continuous
//! multiplier, zigzag scan, DC prediction and run-length Huffman coding
//! with the Annex K "typical" tables, stored in a small `DCX1` container.

mod huffman;
mod tables;
mod transform;

use std::sync::OnceLock;

use crate::bitio::{BitReader, BitWriter};
use crate::error::{Error, Result};
use crate::imagecore::{color, pad_to_multiple, Image};
use huffman::{category, extend, extra_bits, HuffmanTable};

pub use tables::{CHROMA_QUANT, LUMA_QUANT, ZIGZAG};
pub use transform::{
    dequantize_block, fdct8x8, idct8x8, inverse_zigzag, quantize_block, zigzag, Block, QuantTable,
    MAX_STEP,
};

pub const MAGIC: &[u8; 4] = b"DCX1";
pub const HEADER_LEN: usize = 4 + 4 + 4 + 1 + 1 + 8 + 8;

/// Quantized coefficients of one plane, blocks in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantPlane {
    pub width: usize,
    pub height: usize,
    pub blocks: Vec<[i32; 64]>,
}

impl QuantPlane {
    pub fn blocks_wide(&self) -> usize {
        self.width / 8
    }
}

/// Everything the decoder needs, before or after entropy coding.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub subsample: bool,
    pub multiplier: f64,
    pub planes: Vec<QuantPlane>,
}

/// Entropy-coded stream with its `DCX1` header fields.
#[derive(Debug, Clone, PartialEq)]
pub struct DctStream {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub subsample: bool,
    pub multiplier: f64,
    pub payload: Vec<u8>,
}

impl DctStream {
    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(self.channels);
        out.push(u8::from(self.subsample));
        out.extend_from_slice(&self.multiplier.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("missing DCX1 magic".into()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format("DCX1 header truncated".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let width = u32_at(4);
        let height = u32_at(8);
        let channels = bytes[12];
        let subsample = match bytes[13] {
            0 => false,
            1 => true,
            f => return Err(Error::Format(format!("bad subsample flag {f}"))),
        };
        let multiplier = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
        let len = u64::from_le_bytes(bytes[22..30].try_into().unwrap());
        let available = (bytes.len() - HEADER_LEN) as u64;
        if len > available {
            return Err(Error::decode(
                bytes.len(),
                format!("payload truncated: header says {len} bytes, {available} present"),
            ));
        }
        if len < available {
            return Err(Error::Format(format!("{} trailing bytes", available - len)));
        }
        Ok(DctStream {
            width,
            height,
            channels,
            subsample,
            multiplier,
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }
}

fn check_multiplier(m: f64) -> Result<()> {
    if m.is_finite() && m > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "multiplier must be positive, got {m}"
        )))
    }
}

/// Pads, converts to YCbCr, optionally subsamples chroma 2x2, and
/// quantizes every block. This is the lossy part of the codec.
pub fn quantize_image(img: &Image, multiplier: f64, subsample: bool) -> Result<QuantizedImage> {
    check_multiplier(multiplier)?;
    let subsample = subsample && img.channels() == 3;
    let padded = pad_to_multiple(img, if subsample { 16 } else { 8 })?.image;
    let (pw, ph) = (padded.width(), padded.height());
    let mut planes: Vec<Vec<f64>> = padded.planes().map(<[f64]>::to_vec).collect();
    if img.channels() == 3 {
        let [p0, p1, p2] = &mut planes[..] else {
            unreachable!()
        };
        color::convert_planes(p0, p1, p2, color::forward);
    }
    let mut out = Vec::with_capacity(planes.len());
    for (c, plane) in planes.iter().enumerate() {
        let (data, w, h) = if c > 0 && subsample {
            (downsample(plane, pw, ph), pw / 2, ph / 2)
        } else {
            (plane.clone(), pw, ph)
        };
        let table = QuantTable::for_channel(c, multiplier)?;
        let mut blocks = Vec::with_capacity(w * h / 64);
        for by in 0..h / 8 {
            for bx in 0..w / 8 {
                let block: Block =
                    std::array::from_fn(|i| data[(by * 8 + i / 8) * w + bx * 8 + i % 8]);
                blocks.push(quantize_block(&fdct8x8(&block), &table));
            }
        }
        out.push(QuantPlane {
            width: w,
            height: h,
            blocks,
        });
    }
    Ok(QuantizedImage {
        width: img.width(),
        height: img.height(),
        channels: img.channels(),
        subsample,
        multiplier,
        planes: out,
    })
}

/// Dequantize, inverse DCT, upsample, color back-transform, crop, clamp.
pub fn reconstruct(q: &QuantizedImage) -> Result<Image> {
    let luma = q
        .planes
        .first()
        .ok_or_else(|| Error::Format("no planes".into()))?;
    let (pw, ph) = (luma.width, luma.height);
    let mut planes = Vec::with_capacity(q.planes.len());
    for (c, plane) in q.planes.iter().enumerate() {
        let table = QuantTable::for_channel(c, q.multiplier)?;
        let w = plane.width;
        let mut data = vec![0.0; w * plane.height];
        for (i, qb) in plane.blocks.iter().enumerate() {
            let (bx, by) = (i % plane.blocks_wide(), i / plane.blocks_wide());
            let samples = idct8x8(&dequantize_block(qb, &table));
            for (j, v) in samples.iter().enumerate() {
                data[(by * 8 + j / 8) * w + bx * 8 + j % 8] = *v;
            }
        }
        if plane.width != pw || plane.height != ph {
            data = upsample(&data, plane.width, plane.height);
        }
        planes.push(data);
    }
    if q.channels == 3 {
        let [p0, p1, p2] = &mut planes[..] else {
            return Err(Error::Format("3-channel stream without 3 planes".into()));
        };
        color::convert_planes(p0, p1, p2, color::inverse);
    }
    let full = Image::from_planes(pw, ph, planes)?;
    full.crop(q.width, q.height)
}

fn downsample(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (hw, hh) = (w / 2, h / 2);
    let mut out = vec![0.0; hw * hh];
    for y in 0..hh {
        for x in 0..hw {
            let at = |dx: usize, dy: usize| plane[(2 * y + dy) * w + 2 * x + dx];
            out[y * hw + x] = 0.25 * (at(0, 0) + at(1, 0) + at(0, 1) + at(1, 1));
        }
    }
    out
}

fn upsample(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; 4 * w * h];
    for y in 0..2 * h {
        for x in 0..2 * w {
            out[y * 2 * w + x] = plane[(y / 2) * w + x / 2];
        }
    }
    out
}

struct Tables {
    dc: [HuffmanTable; 2],
    ac: [HuffmanTable; 2],
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| Tables {
        dc: [
            HuffmanTable::new(&tables::LUMA_DC_BITS, &tables::LUMA_DC_VALS),
            HuffmanTable::new(&tables::CHROMA_DC_BITS, &tables::CHROMA_DC_VALS),
        ],
        ac: [
            HuffmanTable::new(&tables::LUMA_AC_BITS, &tables::LUMA_AC_VALS),
            HuffmanTable::new(&tables::CHROMA_AC_BITS, &tables::CHROMA_AC_VALS),
        ],
    })
}

/// Lossless entropy stage. Each plane is coded in turn and byte-aligned.
pub fn entropy_encode(q: &QuantizedImage) -> Result<DctStream> {
    let t = tables();
    let mut w = BitWriter::new();
    for (c, plane) in q.planes.iter().enumerate() {
        let k = usize::from(c > 0);
        let mut pred = 0i32;
        for block in &plane.blocks {
            let zz = zigzag(block);
            let diff = zz[0] - pred;
            pred = zz[0];
            let s = category(diff);
            if s > 11 {
                return Err(Error::Invariant(format!(
                    "DC difference {diff} out of range"
                )));
            }
            t.dc[k].encode(&mut w, s as u8)?;
            w.put(extra_bits(diff, s), s);

            let mut run = 0;
            for &v in &zz[1..] {
                if v == 0 {
                    run += 1;
                    continue;
                }
                while run >= 16 {
                    t.ac[k].encode(&mut w, 0xf0)?;
                    run -= 16;
                }
                let s = category(v);
                if s > 10 {
                    return Err(Error::Invariant(format!("AC coefficient {v} out of range")));
                }
                t.ac[k].encode(&mut w, ((run << 4) | s) as u8)?;
                w.put(extra_bits(v, s), s);
                run = 0;
            }
            if run > 0 {
                t.ac[k].encode(&mut w, 0x00)?;
            }
        }
        w.align();
    }
    Ok(DctStream {
        width: q.width as u32,
        height: q.height as u32,
        channels: q.channels as u8,
        subsample: q.subsample,
        multiplier: q.multiplier,
        payload: w.finish(),
    })
}

/// Inverse of [`entropy_encode`]. Error offsets are payload-relative.
pub fn entropy_decode(stream: &DctStream) -> Result<QuantizedImage> {
    check_multiplier(stream.multiplier).map_err(|e| Error::Format(e.to_string()))?;
    let channels = usize::from(stream.channels);
    if channels != 1 && channels != 3 {
        return Err(Error::Format(format!("{channels} channels")));
    }
    let (width, height) = (stream.width as usize, stream.height as usize);
    if width == 0 || height == 0 {
        return Err(Error::Format("zero image dimension".into()));
    }
    let subsample = stream.subsample && channels == 3;
    let align = if subsample { 16 } else { 8 };
    let (pw, ph) = (
        width.div_ceil(align) * align,
        height.div_ceil(align) * align,
    );
    let dims: Vec<(usize, usize)> = (0..channels)
        .map(|c| {
            if c > 0 && subsample {
                (pw / 2, ph / 2)
            } else {
                (pw, ph)
            }
        })
        .collect();
    // every block costs at least 4 bits; reject impossible headers before allocating
    let min_bits: u128 = dims.iter().map(|(w, h)| (w * h / 64) as u128 * 4).sum();
    if min_bits > stream.payload.len() as u128 * 8 {
        return Err(Error::decode(
            stream.payload.len(),
            "payload too short for the declared dimensions",
        ));
    }

    let t = tables();
    let mut r = BitReader::new(&stream.payload);
    let mut planes = Vec::with_capacity(channels);
    for (c, &(w, h)) in dims.iter().enumerate() {
        let k = usize::from(c > 0);
        let mut pred = 0i32;
        let mut blocks = Vec::with_capacity(w * h / 64);
        for _ in 0..w * h / 64 {
            let mut zz = [0i32; 64];
            let s = u32::from(t.dc[k].decode(&mut r)?);
            let diff = extend(r.bits(s)?, s);
            pred = pred
                .checked_add(diff)
                .ok_or_else(|| Error::decode(r.byte_pos(), "DC predictor overflow"))?;
            zz[0] = pred;
            let mut i = 1;
            while i < 64 {
                let rs = t.ac[k].decode(&mut r)?;
                match rs {
                    0x00 => break,
                    0xf0 => i += 16,
                    _ => {
                        i += usize::from(rs >> 4);
                        if i > 63 {
                            return Err(Error::decode(r.byte_pos(), "AC run past end of block"));
                        }
                        let s = u32::from(rs & 0x0f);
                        zz[i] = extend(r.bits(s)?, s);
                        i += 1;
                    }
                }
            }
            if i > 64 {
                return Err(Error::decode(r.byte_pos(), "zero run past end of block"));
            }
            blocks.push(inverse_zigzag(&zz));
        }
        r.align();
        planes.push(QuantPlane {
            width: w,
            height: h,
            blocks,
        });
    }
    if r.byte_pos() != stream.payload.len() {
        return Err(Error::decode(r.byte_pos(), "trailing payload bytes"));
    }
    Ok(QuantizedImage {
        width,
        height,
        channels,
        subsample,
        multiplier: stream.multiplier,
        planes,
    })
}

pub fn encode_dct(img: &Image, multiplier: f64, subsample: bool) -> Result<DctStream> {
    entropy_encode(&quantize_image(img, multiplier, subsample)?)
}

pub fn decode_dct(stream: &DctStream) -> Result<Image> {
    reconstruct(&entropy_decode(stream)?)
}

/// Transform and quantization without entropy coding; identical output to
/// `decode_dct(encode_dct(img, multiplier, false))`.
pub fn dct_quantize_only(img: &Image, multiplier: f64) -> Result<Image> {
    reconstruct(&quantize_image(img, multiplier, false)?)
}
