use std::sync::OnceLock;

use super::tables::{CHROMA_QUANT, LUMA_QUANT, ZIGZAG};
use crate::error::{Error, Result};

/// 8x8 block, row-major. For coefficient blocks row index is the vertical
/// frequency `v`, column index the horizontal frequency `u`.
pub type Block = [f64; 64];

/// Largest effective quantizer step.
pub const MAX_STEP: f64 = 32767.0;

/// `COS[x][u] = C(u)/2 * cos((2x+1) u pi / 16)`, so a 1-D pass is a plain
/// matrix product and the 2-D transform picks up the overall 1/4.
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut t = [[0.0; 8]; 8];
        for (x, row) in t.iter_mut().enumerate() {
            for (u, v) in row.iter_mut().enumerate() {
                let c = if u == 0 {
                    std::f64::consts::FRAC_1_SQRT_2
                } else {
                    1.0
                };
                *v = 0.5 * c * (((2 * x + 1) * u) as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        t
    })
}

/// Forward DCT of a block of samples in `[0, 255]`, level-shifted by -128.
pub fn fdct8x8(block: &Block) -> Block {
    let t = basis();
    let mut rows = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            let mut acc = 0.0;
            for x in 0..8 {
                acc += (block[y * 8 + x] - 128.0) * t[x][u];
            }
            rows[y * 8 + u] = acc;
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            let mut acc = 0.0;
            for y in 0..8 {
                acc += rows[y * 8 + u] * t[y][v];
            }
            out[v * 8 + u] = acc;
        }
    }
    out
}

/// Inverse of [`fdct8x8`], including the +128 level shift. Not clamped.
pub fn idct8x8(coeffs: &Block) -> Block {
    let t = basis();
    let mut cols = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            let mut acc = 0.0;
            for v in 0..8 {
                acc += coeffs[v * 8 + u] * t[y][v];
            }
            cols[y * 8 + u] = acc;
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            let mut acc = 128.0;
            for u in 0..8 {
                acc += cols[y * 8 + u] * t[x][u];
            }
            out[y * 8 + x] = acc;
        }
    }
    out
}

/// Annex K base table scaled by a continuous multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantTable {
    base: [u16; 64],
    multiplier: f64,
}

impl QuantTable {
    pub fn new(base: [u16; 64], multiplier: f64) -> Result<Self> {
        if !(multiplier.is_finite() && multiplier > 0.0) {
            return Err(Error::Parameter(format!(
                "quantization multiplier must be positive, got {multiplier}"
            )));
        }
        if base.iter().any(|&b| b == 0 || b > 255) {
            return Err(Error::Parameter("base steps must lie in [1, 255]".into()));
        }
        Ok(QuantTable { base, multiplier })
    }

    pub fn luma(multiplier: f64) -> Result<Self> {
        Self::new(LUMA_QUANT, multiplier)
    }

    pub fn chroma(multiplier: f64) -> Result<Self> {
        Self::new(CHROMA_QUANT, multiplier)
    }

    /// Table for plane `channel` (0 = luma).
    pub fn for_channel(channel: usize, multiplier: f64) -> Result<Self> {
        if channel == 0 {
            Self::luma(multiplier)
        } else {
            Self::chroma(multiplier)
        }
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn base(&self) -> &[u16; 64] {
        &self.base
    }

    /// Effective steps `clamp(round(base * m), 1, 32767)`, natural order.
    pub fn steps(&self) -> [f64; 64] {
        self.base.map(|b| {
            (f64::from(b) * self.multiplier)
                .round()
                .clamp(1.0, MAX_STEP)
        })
    }
}

/// `round(S / step)`, half away from zero.
pub fn quantize_block(coeffs: &Block, table: &QuantTable) -> [i32; 64] {
    let steps = table.steps();
    std::array::from_fn(|i| (coeffs[i] / steps[i]).round() as i32)
}

pub fn dequantize_block(q: &[i32; 64], table: &QuantTable) -> Block {
    let steps = table.steps();
    std::array::from_fn(|i| f64::from(q[i]) * steps[i])
}

/// Natural order to zigzag scan order.
pub fn zigzag<T: Copy>(block: &[T; 64]) -> [T; 64] {
    std::array::from_fn(|i| block[ZIGZAG[i]])
}

pub fn inverse_zigzag<T: Copy + Default>(seq: &[T; 64]) -> [T; 64] {
    let mut out = [T::default(); 64];
    for (i, &v) in seq.iter().enumerate() {
        out[ZIGZAG[i]] = v;
    }
    out
}
