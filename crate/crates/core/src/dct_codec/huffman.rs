//! Canonical Huffman tables built from (BITS, HUFFVAL) lists.

use crate::bitio::{BitReader, BitWriter};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct HuffmanTable {
    /// (code, length) per symbol; length 0 means absent.
    codes: [(u16, u8); 256],
    // Decoding: for each length, the first code and index into `values`.
    min_code: [i32; 17],
    max_code: [i32; 17],
    val_ptr: [usize; 17],
    values: Vec<u8>,
}

impl HuffmanTable {
    pub fn new(bits: &[u8; 16], values: &[u8]) -> Self {
        let mut codes = [(0u16, 0u8); 256];
        let mut min_code = [0i32; 17];
        let mut max_code = [-1i32; 17];
        let mut val_ptr = [0usize; 17];
        let mut code = 0u16;
        let mut k = 0usize;
        for len in 1..=16 {
            let count = bits[len - 1] as usize;
            val_ptr[len] = k;
            min_code[len] = i32::from(code);
            for _ in 0..count {
                codes[values[k] as usize] = (code, len as u8);
                code += 1;
                k += 1;
            }
            max_code[len] = i32::from(code) - 1;
            code <<= 1;
        }
        HuffmanTable {
            codes,
            min_code,
            max_code,
            val_ptr,
            values: values.to_vec(),
        }
    }

    pub fn encode(&self, w: &mut BitWriter, symbol: u8) -> Result<()> {
        let (code, len) = self.codes[symbol as usize];
        if len == 0 {
            return Err(Error::Invariant(format!(
                "symbol {symbol:#04x} has no Huffman code"
            )));
        }
        w.put(u64::from(code), u32::from(len));
        Ok(())
    }

    pub fn decode(&self, r: &mut BitReader) -> Result<u8> {
        let start = r.byte_pos();
        let mut code = 0i32;
        for len in 1..=16 {
            code = (code << 1) | i32::from(r.bit()?);
            if self.max_code[len] >= self.min_code[len] && code <= self.max_code[len] {
                let idx = self.val_ptr[len] + (code - self.min_code[len]) as usize;
                return Ok(self.values[idx]);
            }
        }
        Err(Error::decode(start, "invalid Huffman code"))
    }
}

/// Magnitude category: bits needed to represent `|v|`.
pub fn category(v: i32) -> u32 {
    32 - v.unsigned_abs().leading_zeros()
}

/// JPEG's one's-complement style extra bits for a value of category `s`.
pub fn extra_bits(v: i32, s: u32) -> u64 {
    if v >= 0 {
        v as u64
    } else {
        (v + (1 << s) - 1) as u64
    }
}

pub fn extend(bits: u64, s: u32) -> i32 {
    if s == 0 {
        0
    } else if bits < (1 << (s - 1)) {
        bits as i32 - (1 << s) + 1
    } else {
        bits as i32
    }
}
