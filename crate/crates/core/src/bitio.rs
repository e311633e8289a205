//! MSB-first bit packing shared by both entropy coders.

use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    nbits: u32,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `n` bits of `value`, most significant first. `n <= 57`.
    pub fn put(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 57);
        if n == 0 {
            return;
        }
        self.acc = (self.acc << n) | (value & ((1u64 << n) - 1));
        self.nbits += n;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.bytes.push((self.acc >> self.nbits) as u8);
        }
        self.acc &= (1u64 << self.nbits) - 1;
    }

    pub fn put_bit(&mut self, bit: bool) {
        self.put(u64::from(bit), 1);
    }

    /// Total bits written so far.
    pub fn bit_len(&self) -> u64 {
        self.bytes.len() as u64 * 8 + u64::from(self.nbits)
    }

    /// Pads the current byte with one-bits.
    pub fn align(&mut self) {
        if self.nbits > 0 {
            let pad = 8 - self.nbits;
            self.put((1u64 << pad) - 1, pad);
        }
    }

    pub fn finish(mut self) -> Vec<u8> {
        self.align();
        self.bytes
    }
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
    limit: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        BitReader {
            bytes,
            pos: 0,
            limit: bytes.len() as u64 * 8,
        }
    }

    /// Restricts reading to the first `byte_len` bytes.
    pub fn set_byte_limit(&mut self, byte_len: usize) {
        self.limit = (byte_len.min(self.bytes.len()) as u64) * 8;
    }

    pub fn bit_pos(&self) -> u64 {
        self.pos
    }

    pub fn seek(&mut self, bit_pos: u64) {
        self.pos = bit_pos;
    }

    pub fn byte_pos(&self) -> usize {
        self.pos.div_ceil(8) as usize
    }

    pub fn remaining(&self) -> u64 {
        self.limit.saturating_sub(self.pos)
    }

    pub fn bit(&mut self) -> Result<bool> {
        if self.pos >= self.limit {
            return Err(self.eof());
        }
        let byte = self.bytes[(self.pos >> 3) as usize];
        let bit = (byte >> (7 - (self.pos & 7))) & 1;
        self.pos += 1;
        Ok(bit == 1)
    }

    /// Reads `n <= 64` bits as an unsigned value.
    pub fn bits(&mut self, n: u32) -> Result<u64> {
        if u64::from(n) > self.remaining() {
            return Err(self.eof());
        }
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | u64::from(self.bit()?);
        }
        Ok(v)
    }

    pub fn align(&mut self) {
        self.pos = self.pos.div_ceil(8) * 8;
    }

    pub fn is_eof(err: &Error) -> bool {
        matches!(err, Error::Decode { reason, .. } if reason == EOF_REASON)
    }

    fn eof(&self) -> Error {
        Error::decode((self.pos / 8) as usize, EOF_REASON)
    }
}

const EOF_REASON: &str = "unexpected end of payload";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_read() {
        let mut w = BitWriter::new();
        w.put(0b101, 3);
        w.put(0xABCD, 16);
        w.put_bit(false);
        assert_eq!(w.bit_len(), 20);
        let bytes = w.finish();
        assert_eq!(bytes.len(), 3);
        let mut r = BitReader::new(&bytes);
        assert_eq!(r.bits(3).unwrap(), 0b101);
        assert_eq!(r.bits(16).unwrap(), 0xABCD);
        assert!(!r.bit().unwrap());
        assert_eq!(r.bits(4).unwrap(), 0xF);
        let err = r.bit().unwrap_err();
        assert!(BitReader::is_eof(&err));
    }

    #[test]
    fn byte_limit_truncates() {
        let bytes = [0xFF, 0x00];
        let mut r = BitReader::new(&bytes);
        r.set_byte_limit(1);
        assert_eq!(r.bits(8).unwrap(), 0xFF);
        assert!(r.bit().is_err());
    }
}
