//! Fixed-point points, trie squares and Morton-key arithmetic.
//!
//! A point is `d` unsigned coordinates of `w` bits each. Interleaving the bits
//! (most significant first, axis 0 leading within each group) yields the Morton
//! key; sorting by it visits the leaves of the full `2^d`-ary trie depth-first,
//! which is what lets a sorted array stand in for an explicit quadtree.

use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// Largest supported coordinate width.
pub const MAX_WIDTH: u32 = 32;

/// Shared parameters: dimension, coordinate width, rounding precision and
/// target aspect ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Config {
    pub dim: u8,
    pub width: u32,
    pub gamma: u32,
    pub rho: f64,
}

impl Config {
    pub const DEFAULT_RHO: f64 = 2.0;

    pub fn new(dim: u8, width: u32, gamma: u32) -> Result<Self> {
        Self::with_rho(dim, width, gamma, Self::DEFAULT_RHO)
    }

    pub fn with_rho(dim: u8, width: u32, gamma: u32, rho: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Config(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if width == 0 || width > MAX_WIDTH {
            return Err(Error::Config(format!(
                "coordinate width must be in 1..={MAX_WIDTH}, got {width}"
            )));
        }
        if gamma > width {
            return Err(Error::Config(format!(
                "gamma {gamma} exceeds coordinate width {width}"
            )));
        }
        if !(rho.is_finite() && rho > 1.0) {
            return Err(Error::Config(format!(
                "rho must be a finite value > 1, got {rho}"
            )));
        }
        Ok(Config {
            dim,
            width,
            gamma,
            rho,
        })
    }

    /// Largest coordinate value, `2^w - 1`.
    pub fn max_coord(&self) -> u32 {
        ((1u64 << self.width) - 1) as u32
    }

    pub fn check_point(&self, p: &Point) -> Result<()> {
        if p.dim() != self.dim {
            return Err(Error::Config(format!(
                "point has dimension {}, expected {}",
                p.dim(),
                self.dim
            )));
        }
        if p.coords().iter().any(|&c| u64::from(c) >> self.width != 0) {
            return Err(Error::OutOfDomain {
                coords: p.coords().iter().map(|&c| u64::from(c)).collect(),
                width: self.width,
            });
        }
        Ok(())
    }

    pub fn root(&self) -> TrieSquare {
        TrieSquare {
            corner: Point::origin(self.dim),
            height: self.width,
        }
    }
}

/// A point on the integer grid. Unused axes (the third one in 2D) are zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Point {
    coords: [u32; 3],
    dim: u8,
}

impl Point {
    pub fn new2(x: u32, y: u32) -> Self {
        Point {
            coords: [x, y, 0],
            dim: 2,
        }
    }

    pub fn new3(x: u32, y: u32, z: u32) -> Self {
        Point {
            coords: [x, y, z],
            dim: 3,
        }
    }

    pub fn origin(dim: u8) -> Self {
        Point {
            coords: [0; 3],
            dim,
        }
    }

    /// Builds a point from `dim` coordinates.
    ///
    /// Panics if `coords.len()` is not 2 or 3.
    pub fn from_slice(coords: &[u32]) -> Self {
        match *coords {
            [x, y] => Point::new2(x, y),
            [x, y, z] => Point::new3(x, y, z),
            _ => panic!("points have 2 or 3 coordinates, got {}", coords.len()),
        }
    }

    #[inline]
    pub fn dim(&self) -> u8 {
        self.dim
    }

    #[inline]
    pub fn coords(&self) -> &[u32] {
        &self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn coords_mut(&mut self) -> &mut [u32] {
        &mut self.coords[..self.dim as usize]
    }

    #[inline]
    pub fn get(&self, axis: usize) -> u32 {
        self.coords()[axis]
    }

    /// Squared Euclidean distance, exact.
    pub fn dist2(&self, other: &Point) -> u128 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(&a, &b)| {
                let d = u64::from(a.abs_diff(b));
                u128::from(d * d)
            })
            .sum()
    }

    /// The point with the low `bits` bits of every coordinate cleared.
    pub fn clear_low_bits(&self, bits: u32) -> Point {
        let mut out = *self;
        if bits == 0 {
            return out;
        }
        let mask = if bits >= 32 { 0 } else { u32::MAX << bits };
        for c in out.coords_mut() {
            *c &= mask;
        }
        out
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Interleaved coordinate bits. At most 96 significant bits (`d = 3`, `w = 32`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MortonKey(pub u128);

#[inline]
fn spread2(x: u32) -> u64 {
    let mut x = u64::from(x);
    x = (x | (x << 16)) & 0x0000_FFFF_0000_FFFF;
    x = (x | (x << 8)) & 0x00FF_00FF_00FF_00FF;
    x = (x | (x << 4)) & 0x0F0F_0F0F_0F0F_0F0F;
    x = (x | (x << 2)) & 0x3333_3333_3333_3333;
    x = (x | (x << 1)) & 0x5555_5555_5555_5555;
    x
}

// Spreads the low 21 bits of `x` to every third bit.
#[inline]
fn spread3_21(x: u64) -> u64 {
    let mut x = x & 0x1F_FFFF;
    x = (x | (x << 32)) & 0x001F_0000_0000_FFFF;
    x = (x | (x << 16)) & 0x001F_0000_FF00_00FF;
    x = (x | (x << 8)) & 0x100F_00F0_0F00_F00F;
    x = (x | (x << 4)) & 0x10C3_0C30_C30C_30C3;
    x = (x | (x << 2)) & 0x1249_2492_4924_9249;
    x
}

#[inline]
fn spread3(x: u32) -> u128 {
    let x = u64::from(x);
    u128::from(spread3_21(x)) | (u128::from(spread3_21(x >> 21)) << 63)
}

/// Morton key of `p`: for every bit position from the most significant down,
/// emit axis 0's bit, then axis 1's, and so on.
#[inline]
pub fn interleave(p: &Point) -> MortonKey {
    let c = &p.coords;
    match p.dim {
        2 => MortonKey(u128::from((spread2(c[0]) << 1) | spread2(c[1]))),
        _ => MortonKey((spread3(c[0]) << 2) | (spread3(c[1]) << 1) | spread3(c[2])),
    }
}

/// Inverse of [`interleave`].
pub fn deinterleave(key: MortonKey, dim: u8) -> Point {
    let d = dim as usize;
    let mut coords = [0u32; 3];
    for bit in 0..32 {
        for (axis, c) in coords.iter_mut().enumerate().take(d) {
            let pos = bit * d + (d - 1 - axis);
            if (key.0 >> pos) & 1 == 1 {
                *c |= 1 << bit;
            }
        }
    }
    Point { coords, dim }
}

// True when the highest set bit of `a` is below that of `b`.
#[inline]
fn less_msb(a: u32, b: u32) -> bool {
    a < b && a < (a ^ b)
}

/// Morton comparison without forming keys: the axis whose xor has the highest
/// set bit decides, with lower axis indices winning ties.
pub fn morton_cmp(p: &Point, q: &Point) -> Ordering {
    let mut best = 0usize;
    let mut best_xor = 0u32;
    for axis in 0..p.dim as usize {
        let x = p.coords[axis] ^ q.coords[axis];
        if less_msb(best_xor, x) {
            best = axis;
            best_xor = x;
        }
    }
    p.coords[best].cmp(&q.coords[best])
}

pub fn morton_less(p: &Point, q: &Point) -> bool {
    morton_cmp(p, q) == Ordering::Less
}

#[inline]
fn bit_length(x: u64) -> u32 {
    64 - x.leading_zeros()
}

/// A node of the implicit trie: aligned minimum corner and height `h`
/// (side `2^h`).
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrieSquare {
    pub corner: Point,
    pub height: u32,
}

impl fmt::Debug for TrieSquare {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}@h{}", self.corner, self.height)
    }
}

impl TrieSquare {
    /// Validates alignment and that the square fits in the `width`-bit domain.
    pub fn new(corner: Point, height: u32, width: u32) -> Result<Self> {
        if height > width {
            return Err(Error::Config(format!(
                "square height {height} exceeds width {width}"
            )));
        }
        let side = 1u64 << height;
        for &c in corner.coords() {
            let c = u64::from(c);
            if c & (side - 1) != 0 || c + side > 1u64 << width {
                return Err(Error::Config(format!(
                    "{corner:?} is not the corner of a height-{height} trie square"
                )));
            }
        }
        Ok(TrieSquare { corner, height })
    }

    /// The height-`height` trie square containing `p`.
    pub fn containing(p: &Point, height: u32) -> Self {
        TrieSquare {
            corner: p.clear_low_bits(height),
            height,
        }
    }

    #[inline]
    pub fn side(&self) -> u64 {
        1u64 << self.height
    }

    pub fn contains(&self, p: &Point) -> bool {
        let h = self.height;
        p.dim() == self.corner.dim()
            && p.coords()
                .iter()
                .zip(self.corner.coords())
                .all(|(&a, &c)| (u64::from(a) >> h) == (u64::from(c) >> h))
    }

    /// Half-open Morton key interval covered by the square.
    pub fn key_range(&self) -> (MortonKey, MortonKey) {
        let lo = interleave(&self.corner).0;
        let span = 1u128 << (u32::from(self.corner.dim()) * self.height);
        (MortonKey(lo), MortonKey(lo + span))
    }

    pub fn parent(&self, width: u32) -> Option<TrieSquare> {
        (self.height < width).then(|| TrieSquare::containing(&self.corner, self.height + 1))
    }

    /// Translates the square by `offset[axis] * 2^h` on each axis; `None` when
    /// the result leaves the domain.
    pub fn offset(&self, offset: &[i8], width: u32) -> Option<TrieSquare> {
        let side = self.side() as i64;
        let limit = 1i64 << width;
        let mut corner = self.corner;
        for (c, &o) in corner.coords_mut().iter_mut().zip(offset) {
            let moved = i64::from(*c) + i64::from(o) * side;
            if moved < 0 || moved + side > limit {
                return None;
            }
            *c = moved as u32;
        }
        Some(TrieSquare {
            corner,
            height: self.height,
        })
    }

    /// All equal-size neighbours that lie inside the domain (up to `3^d - 1`).
    pub fn neighbours(&self, width: u32) -> impl Iterator<Item = TrieSquare> + '_ {
        let d = self.corner.dim() as u32;
        (0..3u32.pow(d)).filter_map(move |code| {
            let mut off = [0i8; 3];
            let mut rest = code;
            for o in off.iter_mut().take(d as usize) {
                *o = (rest % 3) as i8 - 1;
                rest /= 3;
            }
            if off.iter().all(|&o| o == 0) {
                return None;
            }
            self.offset(&off[..d as usize], width)
        })
    }
}

/// Single-axis neighbour: the square moved by `sign * 2^h` along `axis`.
pub fn neighbour(s: &TrieSquare, axis: usize, sign: i8, width: u32) -> Option<TrieSquare> {
    let mut off = [0i8; 3];
    off[axis] = sign.signum();
    s.offset(&off[..s.corner.dim() as usize], width)
}

/// Child `index` of `s`: bit `axis` of `index` selects the upper half on that axis.
pub fn child(s: &TrieSquare, index: usize) -> Result<TrieSquare> {
    if s.height == 0 {
        return Err(Error::Config(format!(
            "{s:?} is a unit square and has no children"
        )));
    }
    let d = s.corner.dim() as usize;
    if index >= 1 << d {
        return Err(Error::Config(format!(
            "child index {index} out of range for dimension {d}"
        )));
    }
    let half = 1u32 << (s.height - 1);
    let mut corner = s.corner;
    for (axis, c) in corner.coords_mut().iter_mut().enumerate() {
        if (index >> axis) & 1 == 1 {
            *c += half;
        }
    }
    Ok(TrieSquare {
        corner,
        height: s.height - 1,
    })
}

pub fn square_contains(s: &TrieSquare, p: &Point) -> bool {
    s.contains(p)
}

/// Smallest trie square holding both points (their lowest common ancestor).
pub fn smallest_common_square(p: &Point, q: &Point) -> TrieSquare {
    let height = p
        .coords()
        .iter()
        .zip(q.coords())
        .map(|(&a, &b)| bit_length(u64::from(a ^ b)))
        .max()
        .unwrap_or(0);
    TrieSquare::containing(p, height)
}
