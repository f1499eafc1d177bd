//! Compressed point store: blocks of xor/gamma-coded points under a sorted
//! index of longhand head keys.
//!
//! Each block keeps its first point (and height) in full. Every later point is
//! one record relative to its predecessor:
//!
//! * lossy: signed gamma of the height difference, then per axis the gamma
//!   code of `(x_i xor x_{i-1}) >> max(h_i - γ, 0)`;
//! * lossless: per axis the gamma code of `x_i xor x_{i-1}`.
//!
//! Blocks hold between `w` and `2w` points (a lone block may be smaller), so a
//! rank or successor query is a binary search over heads plus one serial block
//! decode.

use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use crate::codec::{self, BitBuf, BitReader};
use crate::error::{Error, Result};
use crate::geom::{rounding_shift, HeightedPoint};
use crate::morton::{interleave, Config, MortonKey, Point};
use crate::qtree::{PointSource, VertexRange};

pub const MAGIC: &[u8; 4] = b"PQC1";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Lossless,
    Lossy,
}

impl Mode {
    fn to_byte(self) -> u8 {
        match self {
            Mode::Lossless => 0,
            Mode::Lossy => 1,
        }
    }
}

/// A run of consecutive points: longhand head plus coded records.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub head: HeightedPoint,
    pub count: usize,
    pub payload: BitBuf,
}

#[derive(Debug, Default)]
struct Counters {
    blocks_decoded: AtomicU64,
    searches: AtomicU64,
}

/// Read-side counters, for complexity regression checks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StoreCounters {
    pub blocks_decoded: u64,
    pub searches: u64,
}

#[derive(Debug)]
pub struct CompressedStore {
    config: Config,
    mode: Mode,
    n: usize,
    blocks: Vec<Block>,
    head_keys: Vec<MortonKey>,
    starts: Vec<usize>,
    multiset: bool,
    counters: Counters,
}

impl Clone for CompressedStore {
    fn clone(&self) -> Self {
        CompressedStore {
            config: self.config,
            mode: self.mode,
            n: self.n,
            blocks: self.blocks.clone(),
            head_keys: self.head_keys.clone(),
            starts: self.starts.clone(),
            multiset: self.multiset,
            counters: Counters::default(),
        }
    }
}

/// Incremental record decoder over one block.
pub struct BlockDecoder<'a> {
    block_id: usize,
    config: &'a Config,
    mode: Mode,
    reader: BitReader<'a>,
    prev: Option<HeightedPoint>,
    head: HeightedPoint,
}

impl<'a> BlockDecoder<'a> {
    fn new(block_id: usize, block: &'a Block, config: &'a Config, mode: Mode) -> Self {
        BlockDecoder {
            block_id,
            config,
            mode,
            reader: block.payload.reader(),
            prev: None,
            head: block.head,
        }
    }

    /// Bit offset of the next record.
    pub fn position(&self) -> usize {
        self.reader.position()
    }

    fn corrupt(&self, bit: usize, reason: impl Into<String>) -> Error {
        Error::CorruptPayload {
            block: self.block_id,
            bit,
            reason: reason.into(),
        }
    }

    fn decode_record(&mut self, prev: HeightedPoint) -> Result<HeightedPoint> {
        let start = self.reader.position();
        let w = self.config.width;
        let wrap = |e: Error, at: usize| match e {
            Error::Truncated { .. } => Error::CorruptPayload {
                block: self.block_id,
                bit: at,
                reason: "truncated record".into(),
            },
            other => Error::CorruptPayload {
                block: self.block_id,
                bit: at,
                reason: other.to_string(),
            },
        };
        let height = match self.mode {
            Mode::Lossless => 0,
            Mode::Lossy => {
                let dh =
                    codec::signed_gamma_decode(&mut self.reader).map_err(|e| wrap(e, start))?;
                let h = i64::from(prev.height) + dh;
                if !(0..=i64::from(w)).contains(&h) {
                    return Err(self.corrupt(start, format!("height {h} outside [0, {w}]")));
                }
                h as u32
            }
        };
        let shift = match self.mode {
            Mode::Lossless => 0,
            Mode::Lossy => rounding_shift(height, self.config.gamma),
        };
        let mut point = prev.point;
        for c in point.coords_mut() {
            let at = self.reader.position();
            let delta = codec::gamma_decode(&mut self.reader).map_err(|e| wrap(e, at))?;
            let v = ((u64::from(*c) >> shift) ^ delta) << shift;
            if v >> w != 0 {
                return Err(self.corrupt(at, format!("coordinate {v} exceeds {w} bits")));
            }
            *c = v as u32;
        }
        Ok(HeightedPoint { point, height })
    }
}

impl Iterator for BlockDecoder<'_> {
    type Item = Result<HeightedPoint>;

    fn next(&mut self) -> Option<Self::Item> {
        let next = match self.prev {
            None => Ok(self.head),
            Some(prev) => {
                if self.reader.is_at_end() {
                    return None;
                }
                self.decode_record(prev)
            }
        };
        if let Ok(hp) = next {
            self.prev = Some(hp);
        }
        Some(next)
    }
}

/// Appends the record for `cur` relative to `prev`.
fn encode_record(
    prev: &HeightedPoint,
    cur: &HeightedPoint,
    config: &Config,
    mode: Mode,
    out: &mut BitBuf,
) -> usize {
    match mode {
        Mode::Lossless => {
            codec::xor_code_point(&prev.point, &cur.point, 0, out).expect("shift 0 is valid")
        }
        Mode::Lossy => {
            let dh = i64::from(cur.height) - i64::from(prev.height);
            let shift = rounding_shift(cur.height, config.gamma);
            codec::write_signed_gamma(dh, out)
                + codec::xor_code_point(&prev.point, &cur.point, shift, out)
                    .expect("shift is at most w")
        }
    }
}

/// Encodes a run of points as one block.
fn encode_block(points: &[HeightedPoint], config: &Config, mode: Mode) -> Block {
    let mut payload = BitBuf::new();
    for w in points.windows(2) {
        encode_record(&w[0], &w[1], config, mode, &mut payload);
    }
    Block {
        head: points[0],
        count: points.len(),
        payload,
    }
}

fn height_field_bits(width: u32) -> usize {
    (32 - width.leading_zeros()) as usize
}

impl CompressedStore {
    pub fn empty(config: Config, mode: Mode) -> Self {
        CompressedStore {
            config,
            mode,
            n: 0,
            blocks: Vec::new(),
            head_keys: Vec::new(),
            starts: Vec::new(),
            multiset: false,
            counters: Counters::default(),
        }
    }

    /// A store that tolerates repeated points; used for partially-read inputs
    /// whose prefixes may coincide.
    pub(crate) fn empty_multiset(config: Config, mode: Mode) -> Self {
        CompressedStore {
            multiset: true,
            ..Self::empty(config, mode)
        }
    }

    /// Builds from a Morton-sorted, duplicate-free sequence. In lossy mode the
    /// points must already be rounded for their heights; lossless mode ignores
    /// heights.
    pub fn build<I>(points: I, config: Config, mode: Mode) -> Result<Self>
    where
        I: IntoIterator<Item = HeightedPoint>,
    {
        let mut store = Self::empty(config, mode);
        store.extend_sorted(points)?;
        Ok(store)
    }

    pub fn from_points(points: &[Point], config: Config, mode: Mode) -> Result<Self> {
        match mode {
            Mode::Lossless => {
                let src = crate::qtree::SortedPoints::new(config, points)?;
                Self::build(src.points().iter().copied(), config, mode)
            }
            Mode::Lossy => Self::build(crate::geom::round_set(points, &config)?, config, mode),
        }
    }

    fn block_capacity(&self) -> usize {
        2 * self.config.width as usize
    }

    fn block_minimum(&self) -> usize {
        self.config.width as usize
    }

    fn normalize(&self, hp: HeightedPoint) -> Result<HeightedPoint> {
        self.config.check_point(&hp.point)?;
        match self.mode {
            Mode::Lossless => Ok(HeightedPoint {
                point: hp.point,
                height: 0,
            }),
            Mode::Lossy => {
                if hp.height > self.config.width {
                    return Err(Error::Config(format!(
                        "height {} exceeds width {}",
                        hp.height, self.config.width
                    )));
                }
                let shift = rounding_shift(hp.height, self.config.gamma);
                if hp.point.clear_low_bits(shift) != hp.point {
                    return Err(Error::Config(format!(
                        "{:?} is not rounded for height {}",
                        hp.point, hp.height
                    )));
                }
                Ok(hp)
            }
        }
    }

    fn extend_sorted<I>(&mut self, points: I) -> Result<()>
    where
        I: IntoIterator<Item = HeightedPoint>,
    {
        debug_assert!(self.n == 0);
        let cap = self.block_capacity();
        let mut run: Vec<HeightedPoint> = Vec::with_capacity(cap);
        let mut last_key: Option<MortonKey> = None;
        for (i, hp) in points.into_iter().enumerate() {
            let hp = self.normalize(hp)?;
            let key = interleave(&hp.point);
            if let Some(prev) = last_key {
                if key == prev && !self.multiset {
                    return Err(Error::Duplicate(hp.point.coords().to_vec()));
                }
                if key < prev {
                    return Err(Error::Unsorted(i));
                }
            }
            last_key = Some(key);
            run.push(hp);
            if run.len() == cap {
                self.push_block(encode_block(&run, &self.config, self.mode));
                run.clear();
            }
        }
        if !run.is_empty() {
            if run.len() < self.block_minimum() && !self.blocks.is_empty() {
                // merge the short tail into the previous block and split evenly
                let prev = self.pop_block();
                let mut all = self.decode_block_points(self.blocks.len(), &prev)?;
                all.extend_from_slice(&run);
                let mid = all.len() / 2;
                self.push_block(encode_block(&all[..mid], &self.config, self.mode));
                self.push_block(encode_block(&all[mid..], &self.config, self.mode));
            } else {
                self.push_block(encode_block(&run, &self.config, self.mode));
            }
        }
        Ok(())
    }

    fn push_block(&mut self, block: Block) {
        self.head_keys.push(interleave(&block.head.point));
        self.starts.push(self.n);
        self.n += block.count;
        self.blocks.push(block);
    }

    fn pop_block(&mut self) -> Block {
        let b = self.blocks.pop().expect("nonempty");
        self.head_keys.pop();
        self.starts.pop();
        self.n -= b.count;
        b
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn counters(&self) -> StoreCounters {
        StoreCounters {
            blocks_decoded: self.counters.blocks_decoded.load(AtomicOrdering::Relaxed),
            searches: self.counters.searches.load(AtomicOrdering::Relaxed),
        }
    }

    pub fn reset_counters(&self) {
        self.counters
            .blocks_decoded
            .store(0, AtomicOrdering::Relaxed);
        self.counters.searches.store(0, AtomicOrdering::Relaxed);
    }

    /// Serial decoder over block `id`.
    pub fn block_decoder(&self, id: usize) -> BlockDecoder<'_> {
        self.counters
            .blocks_decoded
            .fetch_add(1, AtomicOrdering::Relaxed);
        BlockDecoder::new(id, &self.blocks[id], &self.config, self.mode)
    }

    fn decode_block_points(&self, id: usize, block: &Block) -> Result<Vec<HeightedPoint>> {
        BlockDecoder::new(id, block, &self.config, self.mode).collect()
    }

    /// Decodes every point of block `id`.
    pub fn decode_block(&self, id: usize) -> Result<Vec<HeightedPoint>> {
        self.block_decoder(id).collect()
    }

    /// All points in Morton order.
    pub fn iter(&self) -> impl Iterator<Item = Result<HeightedPoint>> + '_ {
        (0..self.blocks.len()).flat_map(move |b| self.block_decoder(b))
    }

    pub fn to_vec(&self) -> Result<Vec<HeightedPoint>> {
        self.iter().collect()
    }

    /// Bits of the compressed representation: per block the longhand head
    /// (plus its height field in lossy mode) and the coded records.
    pub fn payload_bits(&self) -> usize {
        let head = self.config.dim as usize * self.config.width as usize
            + match self.mode {
                Mode::Lossless => 0,
                Mode::Lossy => height_field_bits(self.config.width),
            };
        self.blocks.iter().map(|b| head + b.payload.len()).sum()
    }

    /// Map from block size to number of blocks with that size.
    pub fn block_histogram(&self) -> std::collections::BTreeMap<usize, usize> {
        let mut h = std::collections::BTreeMap::new();
        for b in &self.blocks {
            *h.entry(b.count).or_insert(0) += 1;
        }
        h
    }

    fn block_for_rank(&self, rank: usize) -> usize {
        self.starts.partition_point(|&s| s <= rank) - 1
    }

    /// Inserts one point, re-encoding only its own record and its successor's.
    /// Blocks that outgrow `2w` points split into two halves.
    pub fn insert(&mut self, hp: HeightedPoint) -> Result<()> {
        let hp = self.normalize(hp)?;
        let key = interleave(&hp.point);
        if self.blocks.is_empty() {
            self.push_block(encode_block(&[hp], &self.config, self.mode));
            return Ok(());
        }
        let b = self
            .head_keys
            .partition_point(|k| *k <= key)
            .saturating_sub(1);
        let block = &self.blocks[b];

        // decode, remembering where each record starts
        let mut points = Vec::with_capacity(block.count + 1);
        let mut offsets = Vec::with_capacity(block.count + 1);
        let mut dec = BlockDecoder::new(b, block, &self.config, self.mode);
        loop {
            let at = dec.position();
            match dec.next() {
                Some(p) => {
                    points.push(p?);
                    offsets.push(at);
                }
                None => break,
            }
        }
        offsets.push(block.payload.len());
        // offsets[i] for i >= 1 is where point i's record begins
        let pos = points.partition_point(|p| interleave(&p.point) <= key);
        if pos > 0 && points[pos - 1].point == hp.point && !self.multiset {
            return Err(Error::Duplicate(hp.point.coords().to_vec()));
        }
        if pos == 0 && points[0].point == hp.point && !self.multiset {
            return Err(Error::Duplicate(hp.point.coords().to_vec()));
        }

        let mut payload = BitBuf::new();
        let new_head;
        if pos == 0 {
            new_head = hp;
            encode_record(&hp, &points[0], &self.config, self.mode, &mut payload);
            payload.extend_from_range(&block.payload, 0, block.payload.len());
        } else {
            new_head = block.head;
            payload.extend_from_range(&block.payload, 0, offsets[pos]);
            encode_record(&points[pos - 1], &hp, &self.config, self.mode, &mut payload);
            if pos < points.len() {
                encode_record(&hp, &points[pos], &self.config, self.mode, &mut payload);
                payload.extend_from_range(&block.payload, offsets[pos + 1], block.payload.len());
            }
        }
        let count = block.count + 1;
        self.blocks[b] = Block {
            head: new_head,
            count,
            payload,
        };
        self.head_keys[b] = interleave(&new_head.point);
        for s in &mut self.starts[b + 1..] {
            *s += 1;
        }
        self.n += 1;

        if count > self.block_capacity() {
            points.insert(pos, hp);
            let mid = points.len() / 2;
            let left = encode_block(&points[..mid], &self.config, self.mode);
            let right = encode_block(&points[mid..], &self.config, self.mode);
            let right_key = interleave(&right.head.point);
            let right_start = self.starts[b] + left.count;
            self.blocks[b] = left;
            self.blocks.insert(b + 1, right);
            self.head_keys.insert(b + 1, right_key);
            self.starts.insert(b + 1, right_start);
        }
        Ok(())
    }

    /// Serializes to the PQC1 format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        out.push(self.config.dim);
        out.push(self.config.width as u8);
        out.push(self.config.gamma as u8);
        out.push(self.mode.to_byte());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            for &c in b.head.point.coords() {
                out.extend_from_slice(&c.to_le_bytes());
            }
            out.push(b.head.height as u8);
            out.extend_from_slice(&(b.payload.len() as u32).to_le_bytes());
            out.extend_from_slice(b.payload.as_bytes());
        }
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, None)
    }

    /// Parses PQC1 bytes and validates every block. `rho` overrides the
    /// default target aspect ratio, which the format does not record.
    pub fn from_bytes(bytes: &[u8], rho: Option<f64>) -> Result<Self> {
        let mut r = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if r.len() < n {
                return Err(Error::CorruptFile("unexpected end of file".into()));
            }
            let (head, tail) = r.split_at(n);
            r = tail;
            Ok(head)
        };
        if take(4)? != MAGIC {
            return Err(Error::CorruptFile("bad magic".into()));
        }
        let fixed = take(5)?.to_vec();
        if fixed[0] != FORMAT_VERSION {
            return Err(Error::CorruptFile(format!(
                "unsupported version {}",
                fixed[0]
            )));
        }
        let config = Config::with_rho(
            fixed[1],
            u32::from(fixed[2]),
            u32::from(fixed[3]),
            rho.unwrap_or(Config::DEFAULT_RHO),
        )
        .map_err(|e| Error::CorruptFile(e.to_string()))?;
        let mode = match fixed[4] {
            0 => Mode::Lossless,
            1 => Mode::Lossy,
            m => return Err(Error::CorruptFile(format!("unknown mode {m}"))),
        };
        let n = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
        let block_count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut store = Self::empty(config, mode);
        let mut prev_key: Option<MortonKey> = None;
        for id in 0..block_count {
            let mut coords = [0u32; 3];
            for c in coords.iter_mut().take(config.dim as usize) {
                *c = u32::from_le_bytes(take(4)?.try_into().unwrap());
            }
            let head = Point::from_slice(&coords[..config.dim as usize]);
            let height = u32::from(take(1)?[0]);
            let bit_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            let payload = BitBuf::from_bytes(take(bit_len.div_ceil(8))?.to_vec(), bit_len)?;
            let head = store
                .normalize(HeightedPoint {
                    point: head,
                    height,
                })
                .map_err(|e| Error::CorruptFile(format!("block {id} head: {e}")))?;
            if mode == Mode::Lossless && height != 0 {
                return Err(Error::CorruptFile(format!(
                    "block {id}: lossless head has height {height}"
                )));
            }
            let mut block = Block {
                head,
                count: 0,
                payload,
            };
            let points =
                BlockDecoder::new(id, &block, &config, mode).collect::<Result<Vec<_>>>()?;
            for p in &points {
                let key = interleave(&p.point);
                if prev_key.is_some_and(|k| k >= key) {
                    return Err(Error::CorruptFile(format!(
                        "block {id}: points out of Morton order at {:?}",
                        p.point
                    )));
                }
                prev_key = Some(key);
            }
            block.count = points.len();
            store.push_block(block);
        }
        if !r.is_empty() {
            return Err(Error::CorruptFile(format!("{} trailing bytes", r.len())));
        }
        if store.n != n {
            return Err(Error::CorruptFile(format!(
                "header declares {n} points, blocks hold {}",
                store.n
            )));
        }
        Ok(store)
    }

    /// Replaces the target aspect ratio used by Voronoi queries.
    pub fn set_rho(&mut self, rho: f64) -> Result<()> {
        self.config = Config::with_rho(self.config.dim, self.config.width, self.config.gamma, rho)?;
        Ok(())
    }
}

impl PointSource for CompressedStore {
    fn config(&self) -> &Config {
        &self.config
    }

    fn len(&self) -> usize {
        self.n
    }

    fn point_at(&self, rank: usize) -> Result<HeightedPoint> {
        if rank >= self.n {
            return Err(Error::RankOutOfBounds { rank, len: self.n });
        }
        let b = self.block_for_rank(rank);
        let offset = rank - self.starts[b];
        self.block_decoder(b)
            .nth(offset)
            .expect("rank lies inside block")
    }

    fn successor_rank(&self, key: MortonKey) -> usize {
        self.counters.searches.fetch_add(1, AtomicOrdering::Relaxed);
        let b = self.head_keys.partition_point(|k| *k < key);
        if b == 0 {
            return 0;
        }
        let b = b - 1;
        // first point of block b with key >= key, else the next block's head
        for (i, p) in self.block_decoder(b).enumerate() {
            let p = p.expect("blocks are validated on construction");
            if interleave(&p.point) >= key {
                return self.starts[b] + i;
            }
        }
        self.starts[b] + self.blocks[b].count
    }

    fn has_height_hints(&self) -> bool {
        self.mode == Mode::Lossy
    }

    fn visit_range(
        &self,
        range: VertexRange,
        f: &mut dyn FnMut(usize, &HeightedPoint),
    ) -> Result<()> {
        if range.is_empty() {
            return Ok(());
        }
        let mut b = self.block_for_rank(range.lo);
        while b < self.blocks.len() && self.starts[b] < range.hi {
            let start = self.starts[b];
            for (i, p) in self.block_decoder(b).enumerate() {
                let rank = start + i;
                if rank >= range.hi {
                    break;
                }
                if rank >= range.lo {
                    f(rank, &p?);
                }
            }
            b += 1;
        }
        Ok(())
    }
}
