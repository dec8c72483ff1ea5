//! Bit strings and MSB-first bit-level readers.

use std::fmt;
use std::str::FromStr;

use bitvec::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BitsError {
    #[error("invalid bit literal character {0:?} (expected '0' or '1')")]
    BadLiteral(char),
    #[error("field width {0} exceeds 64 bits")]
    WidthTooLarge(u32),
    #[error("unexpected end of bit stream: needed {needed} bits, {available} available")]
    Exhausted { needed: usize, available: usize },
}

/// A finite sequence of bits with a cached count of ones.
///
/// The count of zeros is always `len() - ones()`.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    bits: BitVec<u8, Msb0>,
    ones: usize,
}

impl BitString {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self {
            bits: BitVec::with_capacity(bits),
            ones: 0,
        }
    }

    /// `n` copies of `bit`.
    pub fn repeat(bit: bool, n: usize) -> Self {
        Self {
            bits: BitVec::repeat(bit, n),
            ones: if bit { n } else { 0 },
        }
    }

    /// Every bit of `bytes`, most significant bit of each byte first.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let bits = BitVec::<u8, Msb0>::from_slice(bytes);
        let ones = bits.count_ones();
        Self { bits, ones }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn ones(&self) -> usize {
        self.ones
    }

    pub fn zeros(&self) -> usize {
        self.bits.len() - self.ones
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        self.bits.get(index).map(|b| *b)
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
        self.ones += bit as usize;
    }

    /// Append the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, width: u32) -> Result<(), BitsError> {
        if width > 64 {
            return Err(BitsError::WidthTooLarge(width));
        }
        for shift in (0..width).rev() {
            self.push((value >> shift) & 1 == 1);
        }
        Ok(())
    }

    pub fn extend_from(&mut self, other: &BitString) {
        self.bits.extend_from_bitslice(&other.bits);
        self.ones += other.ones;
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut out = self.clone();
        out.extend_from(other);
        out
    }

    /// Bits in `start..end`, clamped to the string length.
    pub fn slice(&self, start: usize, end: usize) -> BitString {
        let end = end.min(self.len());
        let start = start.min(end);
        let bits: BitVec<u8, Msb0> = self.bits[start..end].to_bitvec();
        let ones = bits.count_ones();
        BitString { bits, ones }
    }

    /// Bitwise complement.
    pub fn complement(&self) -> BitString {
        let bits = !self.bits.clone();
        let ones = self.len() - self.ones;
        BitString { bits, ones }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().by_vals()
    }

    /// Pack into bytes, zero-padding the final byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = self.bits.clone();
        v.set_uninitialized(false);
        v.into_vec()
    }

    pub fn reader(&self) -> BitReader<'_> {
        BitReader {
            bits: &self.bits,
            pos: 0,
        }
    }

    /// Recount ones from the raw bits; used to check the cache.
    pub fn recount_ones(&self) -> usize {
        self.bits.count_ones()
    }
}

impl FromStr for BitString {
    type Err = BitsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = BitString::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => out.push(false),
                '1' => out.push(true),
                other => return Err(BitsError::BadLiteral(other)),
            }
        }
        Ok(out)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len() <= 128 {
            write!(f, "BitString({self})")
        } else {
            write!(f, "BitString(len={}, ones={})", self.len(), self.ones)
        }
    }
}

impl FromIterator<bool> for BitString {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        let mut out = BitString::new();
        for b in iter {
            out.push(b);
        }
        out
    }
}

/// Sequential MSB-first reader over a [`BitString`].
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bits: &'a BitSlice<u8, Msb0>,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool, BitsError> {
        match self.bits.get(self.pos) {
            Some(b) => {
                self.pos += 1;
                Ok(*b)
            }
            None => Err(BitsError::Exhausted {
                needed: 1,
                available: 0,
            }),
        }
    }

    pub fn read_bits(&mut self, width: u32) -> Result<u64, BitsError> {
        if width > 64 {
            return Err(BitsError::WidthTooLarge(width));
        }
        let width = width as usize;
        if self.remaining() < width {
            return Err(BitsError::Exhausted {
                needed: width,
                available: self.remaining(),
            });
        }
        let mut v = 0u64;
        for b in &self.bits[self.pos..self.pos + width] {
            v = (v << 1) | (*b as u64);
        }
        self.pos += width;
        Ok(v)
    }

    /// True when every remaining bit is zero (including when none remain).
    pub fn rest_is_zero(&self) -> bool {
        self.bits[self.pos..].not_any()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_roundtrip_and_counts() {
        let b: BitString = "0110100".parse().unwrap();
        assert_eq!(b.len(), 7);
        assert_eq!(b.ones(), 3);
        assert_eq!(b.zeros(), 4);
        assert_eq!(b.to_string(), "0110100");
        assert!("01x".parse::<BitString>().is_err());
    }

    #[test]
    fn bytes_are_msb_first() {
        let b = BitString::from_bytes(&[0b1000_0001, 0xff]);
        assert_eq!(b.to_string(), "1000000111111111");
        assert_eq!(b.to_bytes(), vec![0b1000_0001, 0xff]);
        let mut odd: BitString = "101".parse().unwrap();
        odd.push(true);
        assert_eq!(odd.to_bytes(), vec![0b1011_0000]);
    }

    #[test]
    fn push_and_read_fields() {
        let mut b = BitString::new();
        b.push_bits(0xABC, 12).unwrap();
        b.push_bits(1, 1).unwrap();
        let mut r = b.reader();
        assert_eq!(r.read_bits(12).unwrap(), 0xABC);
        assert!(r.read_bit().unwrap());
        assert!(r.read_bit().is_err());
        assert!(matches!(
            r.read_bits(4),
            Err(BitsError::Exhausted { needed: 4, .. })
        ));
    }

    #[test]
    fn slice_and_complement_keep_counts() {
        let b: BitString = "11110000".parse().unwrap();
        let s = b.slice(2, 6);
        assert_eq!(s.to_string(), "1100");
        assert_eq!(s.ones(), s.recount_ones());
        let c = b.complement();
        assert_eq!(c.to_string(), "00001111");
        assert_eq!(c.ones(), 4);
        assert_eq!(b.slice(6, 100).to_string(), "00");
    }
}
