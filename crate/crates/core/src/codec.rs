//! Variable-length integer codes over MSB-first bit streams.
//!
//! Gamma code of `v`: `1` when `v = 0`, otherwise `b` zeros followed by the
//! `b` significant bits of `v` (its own leading one terminates the unary run).
//! The signed variant appends a sign bit (`1` = negative) for nonzero values.
//! The xor-code of a point against its predecessor gamma-codes the per-axis
//! xor, optionally shifted right past bits known to be zero.

use crate::error::{Error, Result};
use crate::morton::Point;

/// Growable bit sequence, packed most significant bit first within each byte.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitBuf {
    bytes: Vec<u8>,
    len: usize,
}

impl std::fmt::Debug for BitBuf {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "BitBuf[{}]\"{}\"", self.len, self.to_bit_string())
    }
}

impl BitBuf {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps `bytes` holding `len` meaningful bits; trailing bits must be zero.
    pub fn from_bytes(bytes: Vec<u8>, len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::CorruptFile(format!(
                "{} payload bytes cannot hold exactly {len} bits",
                bytes.len()
            )));
        }
        if !len.is_multiple_of(8) {
            let tail = bytes[bytes.len() - 1] & (0xFF >> (len % 8));
            if tail != 0 {
                return Err(Error::CorruptFile("nonzero padding bits".into()));
            }
        }
        Ok(BitBuf { bytes, len })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn push_bit(&mut self, bit: bool) {
        if self.len.is_multiple_of(8) {
            self.bytes.push(0);
        }
        if bit {
            let last = self.bytes.len() - 1;
            self.bytes[last] |= 0x80 >> (self.len % 8);
        }
        self.len += 1;
    }

    /// Appends the low `n` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 64);
        let mut remaining = n;
        while remaining > 0 {
            let free = 8 - (self.len % 8) as u32;
            if free == 8 {
                self.bytes.push(0);
            }
            let take = free.min(remaining);
            let chunk = ((value >> (remaining - take)) & ((1u64 << take) - 1)) as u8;
            let last = self.bytes.len() - 1;
            self.bytes[last] |= chunk << (free - take);
            self.len += take as usize;
            remaining -= take;
        }
    }

    pub fn push_zeros(&mut self, n: usize) {
        let mut left = n;
        while left > 0 {
            let k = left.min(64);
            self.push_bits(0, k as u32);
            left -= k;
        }
    }

    /// Appends bits `[start, end)` of `src`.
    pub fn extend_from_range(&mut self, src: &BitBuf, start: usize, end: usize) {
        let mut r = src.reader_at(start);
        let mut left = end - start;
        while left > 0 {
            let k = left.min(64) as u32;
            let v = r.read_bits(k).expect("range lies inside source");
            self.push_bits(v, k);
            left -= k as usize;
        }
    }

    pub fn reader(&self) -> BitReader<'_> {
        self.reader_at(0)
    }

    pub fn reader_at(&self, pos: usize) -> BitReader<'_> {
        BitReader {
            bytes: &self.bytes,
            len: self.len,
            pos,
        }
    }

    /// Renders the bits as a `0`/`1` string.
    pub fn to_bit_string(&self) -> String {
        let mut r = self.reader();
        (0..self.len)
            .map(|_| if r.read_bit().unwrap() { '1' } else { '0' })
            .collect()
    }
}

/// Read cursor over a [`BitBuf`]; never reads past the write frontier.
#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    len: usize,
    pos: usize,
}

impl<'a> BitReader<'a> {
    #[inline]
    pub fn position(&self) -> usize {
        self.pos
    }

    #[inline]
    pub fn remaining(&self) -> usize {
        self.len - self.pos
    }

    #[inline]
    pub fn is_at_end(&self) -> bool {
        self.pos >= self.len
    }

    #[inline]
    pub fn read_bit(&mut self) -> Result<bool> {
        if self.pos >= self.len {
            return Err(Error::Truncated { at: self.pos });
        }
        let bit = self.bytes[self.pos / 8] & (0x80 >> (self.pos % 8)) != 0;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u64> {
        debug_assert!(n <= 64);
        if self.remaining() < n as usize {
            return Err(Error::Truncated { at: self.len });
        }
        let mut out = 0u64;
        let mut left = n;
        while left > 0 {
            let avail = 8 - (self.pos % 8) as u32;
            let take = avail.min(left);
            let byte = u64::from(self.bytes[self.pos / 8]);
            let chunk = (byte >> (avail - take)) & ((1u64 << take) - 1);
            out = (out << take) | chunk;
            self.pos += take as usize;
            left -= take;
        }
        Ok(out)
    }

    /// Counts zeros up to and including the terminating one bit.
    fn read_zero_run(&mut self, limit: u32) -> Result<u32> {
        let mut zeros = 0u32;
        loop {
            if self.read_bit()? {
                return Ok(zeros);
            }
            zeros += 1;
            if zeros > limit {
                return Err(Error::CorruptFile(format!(
                    "unary run of more than {limit} zeros at bit {}",
                    self.pos
                )));
            }
        }
    }
}

#[inline]
fn bit_length(v: u64) -> u32 {
    64 - v.leading_zeros()
}

/// Length in bits of the gamma code of `v`.
#[inline]
pub fn gamma_len(v: u64) -> usize {
    if v == 0 {
        1
    } else {
        2 * bit_length(v) as usize
    }
}

/// Length in bits of the signed gamma code of `v`.
#[inline]
pub fn signed_gamma_len(v: i64) -> usize {
    if v == 0 {
        1
    } else {
        gamma_len(v.unsigned_abs()) + 1
    }
}

fn check_width(v: u64, width: u32) -> Result<()> {
    if width < 64 && v >> width != 0 {
        return Err(Error::Overflow { value: v, width });
    }
    Ok(())
}

/// Appends the gamma code of `v < 2^width`; returns the number of bits written.
pub fn gamma_encode(v: u64, width: u32, out: &mut BitBuf) -> Result<usize> {
    check_width(v, width)?;
    Ok(write_gamma(v, out))
}

#[inline]
pub(crate) fn write_gamma(v: u64, out: &mut BitBuf) -> usize {
    if v == 0 {
        out.push_bit(true);
        return 1;
    }
    let b = bit_length(v);
    out.push_zeros(b as usize);
    out.push_bits(v, b);
    2 * b as usize
}

pub fn gamma_decode(input: &mut BitReader<'_>) -> Result<u64> {
    let zeros = input.read_zero_run(64)?;
    if zeros == 0 {
        return Ok(0);
    }
    // the terminating one is the value's leading bit
    let rest = input.read_bits(zeros - 1)?;
    Ok((1u64 << (zeros - 1)) | rest)
}

/// Signed gamma code: gamma of `|v|` then a sign bit for nonzero `v`.
pub fn signed_gamma_encode(v: i64, width: u32, out: &mut BitBuf) -> Result<usize> {
    check_width(v.unsigned_abs(), width)?;
    Ok(write_signed_gamma(v, out))
}

#[inline]
pub(crate) fn write_signed_gamma(v: i64, out: &mut BitBuf) -> usize {
    let n = write_gamma(v.unsigned_abs(), out);
    if v == 0 {
        return n;
    }
    out.push_bit(v < 0);
    n + 1
}

pub fn signed_gamma_decode(input: &mut BitReader<'_>) -> Result<i64> {
    let mag = gamma_decode(input)?;
    if mag == 0 {
        return Ok(0);
    }
    let negative = input.read_bit()?;
    let mag = i64::try_from(mag).map_err(|_| Error::Overflow {
        value: mag,
        width: 63,
    })?;
    Ok(if negative { -mag } else { mag })
}

/// Xor-codes `cur` against `prev`: per axis, gamma of `(prev ^ cur) >> shift`.
pub fn xor_code_point(prev: &Point, cur: &Point, shift: u32, out: &mut BitBuf) -> Result<usize> {
    if shift > 32 {
        return Err(Error::Config(format!("shift {shift} exceeds 32")));
    }
    let mut bits = 0;
    for (&a, &b) in prev.coords().iter().zip(cur.coords()) {
        bits += write_gamma(u64::from(a ^ b) >> shift, out);
    }
    Ok(bits)
}

/// Inverse of [`xor_code_point`]: `cur = ((prev >> shift) ^ delta) << shift`.
pub fn xor_decode_point(prev: &Point, shift: u32, input: &mut BitReader<'_>) -> Result<Point> {
    let mut cur = *prev;
    for c in cur.coords_mut() {
        let delta = gamma_decode(input)?;
        let v = ((u64::from(*c) >> shift) ^ delta) << shift;
        *c = u32::try_from(v).map_err(|_| Error::Overflow {
            value: v,
            width: 32,
        })?;
    }
    Ok(cur)
}
