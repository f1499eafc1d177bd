//! Bounded-memory construction from a text file read in `w` passes.
//!
//! Pass `i` (from `w - 1` down to `0`) sees every coordinate with its low `i`
//! bits cleared. Between passes the reader keeps:
//!
//! * `F`, the compressed store of points whose height and rounding are known;
//! * `U`, a compressed multiset of the last pass's prefixes of all other
//!   points;
//! * one small counter per input point.
//!
//! A point's leaf height is the first level (going down) at which its square
//! stops being crowded. That test needs the complete previous-level prefix
//! set, so it runs while the next pass re-reads the point. Once the height
//! `h` is known the point stays pending until the pass level reaches
//! `h - γ`, at which point its rounded form is final and it moves to `F`.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geom::{round_point, HeightedPoint};
use crate::morton::{Config, Point};
use crate::qtree::{max_uncrowded_height, UnionCounter};
use crate::store::{CompressedStore, Mode};

/// Fields of an optional `# pqc d=<d> w=<w> scale=<s>` header line.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InputHeader {
    pub dim: Option<u8>,
    pub width: Option<u32>,
    pub scale: Option<f64>,
}

/// Parses a header line; `None` when the line is not one.
pub fn parse_header(line: &str) -> Option<InputHeader> {
    let rest = line.trim().strip_prefix('#')?.trim_start();
    let rest = rest.strip_prefix("pqc")?;
    if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
        return None;
    }
    let mut h = InputHeader::default();
    for field in rest.split_whitespace() {
        let (key, value) = field.split_once('=')?;
        match key {
            "d" => h.dim = value.parse().ok(),
            "w" => h.width = value.parse().ok(),
            "scale" => h.scale = value.parse().ok(),
            _ => {}
        }
    }
    Some(h)
}

/// Reads the header from the first line of `path`, if there is one.
pub fn read_header(path: &Path) -> Result<Option<InputHeader>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    Ok(parse_header(&first))
}

/// Parses one input line. Blank lines and `#` comments give `None`.
///
/// Without a scale every token must be an unsigned integer below `2^w`. With
/// a scale every token is a decimal real `x` mapped to `floor(x * scale)`.
pub fn parse_point_line(
    line: &str,
    line_no: usize,
    cfg: &Config,
    scale: Option<f64>,
) -> Result<Option<Point>> {
    let body = line.split('#').next().unwrap_or("").trim();
    if body.is_empty() {
        return Ok(None);
    }
    let parse_err = |reason: String| Error::Parse {
        line: line_no,
        reason,
    };
    let d = cfg.dim as usize;
    let mut coords = [0u32; 3];
    let mut count = 0;
    for tok in body.split_whitespace() {
        if count == d {
            return Err(parse_err(format!("expected {d} coordinates, found more")));
        }
        let value: u64 = match scale {
            None => tok
                .parse::<u64>()
                .map_err(|_| parse_err(format!("not an unsigned integer: {tok:?}")))?,
            Some(s) => {
                let x: f64 = tok
                    .parse()
                    .map_err(|_| parse_err(format!("not a number: {tok:?}")))?;
                let v = (x * s).floor();
                if !v.is_finite() || v < 0.0 || v >= 2f64.powi(cfg.width as i32) {
                    return Err(Error::OutOfRange {
                        line: line_no,
                        value: format!("{tok} * {s}"),
                        width: cfg.width,
                    });
                }
                v as u64
            }
        };
        if value >> cfg.width != 0 {
            return Err(Error::OutOfRange {
                line: line_no,
                value: value.to_string(),
                width: cfg.width,
            });
        }
        coords[count] = value as u32;
        count += 1;
    }
    if count != d {
        return Err(parse_err(format!(
            "expected {d} coordinates, found {count}"
        )));
    }
    Ok(Some(Point::from_slice(&coords[..d])))
}

/// A re-readable sequential point source.
pub trait InputReader {
    /// Streams every point in file order with its ordinal, low `level` bits
    /// of each coordinate cleared.
    fn scan(&mut self, level: u32, visit: &mut dyn FnMut(usize, Point) -> Result<()>)
        -> Result<()>;

    /// Number of completed or started passes.
    fn passes(&self) -> usize;
}

/// Reads points from a text file, reopening it for every pass.
#[derive(Debug)]
pub struct PointFileReader {
    path: PathBuf,
    config: Config,
    scale: Option<f64>,
    passes: usize,
}

impl PointFileReader {
    pub fn new(path: impl Into<PathBuf>, config: Config, scale: Option<f64>) -> Self {
        PointFileReader {
            path: path.into(),
            config,
            scale,
            passes: 0,
        }
    }
}

impl InputReader for PointFileReader {
    fn scan(
        &mut self,
        level: u32,
        visit: &mut dyn FnMut(usize, Point) -> Result<()>,
    ) -> Result<()> {
        self.passes += 1;
        let file = File::open(&self.path).map_err(|e| Error::io(&self.path, e))?;
        let mut reader = BufReader::new(file);
        let mut line = String::new();
        let mut line_no = 0;
        let mut ordinal = 0;
        loop {
            line.clear();
            let read = reader
                .read_line(&mut line)
                .map_err(|e| Error::io(&self.path, e))?;
            if read == 0 {
                return Ok(());
            }
            line_no += 1;
            if let Some(p) = parse_point_line(&line, line_no, &self.config, self.scale)? {
                visit(ordinal, p.clear_low_bits(level))?;
                ordinal += 1;
            }
        }
    }

    fn passes(&self) -> usize {
        self.passes
    }
}

/// In-memory reader with the same masking and pass accounting.
#[derive(Clone, Debug)]
pub struct MemoryReader {
    points: Vec<Point>,
    passes: usize,
}

impl MemoryReader {
    pub fn new(points: Vec<Point>) -> Self {
        MemoryReader { points, passes: 0 }
    }
}

impl InputReader for MemoryReader {
    fn scan(
        &mut self,
        level: u32,
        visit: &mut dyn FnMut(usize, Point) -> Result<()>,
    ) -> Result<()> {
        self.passes += 1;
        for (i, p) in self.points.iter().enumerate() {
            visit(i, p.clear_low_bits(level))?;
        }
        Ok(())
    }

    fn passes(&self) -> usize {
        self.passes
    }
}

/// Fixed-width unsigned counters packed into 64-bit words.
#[derive(Clone, Debug)]
pub struct PackedCounters {
    bits: u32,
    per_word: usize,
    len: usize,
    words: Vec<u64>,
}

impl PackedCounters {
    pub fn new(bits: u32) -> Self {
        assert!((1..=32).contains(&bits));
        PackedCounters {
            bits,
            per_word: (64 / bits) as usize,
            len: 0,
            words: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bits_per_entry(&self) -> u32 {
        self.bits
    }

    /// Heap bytes held.
    pub fn heap_bytes(&self) -> usize {
        self.words.capacity() * 8
    }

    fn mask(&self) -> u64 {
        (1u64 << self.bits) - 1
    }

    pub fn get(&self, i: usize) -> u64 {
        assert!(i < self.len);
        let shift = (i % self.per_word) as u32 * self.bits;
        (self.words[i / self.per_word] >> shift) & self.mask()
    }

    pub fn set(&mut self, i: usize, v: u64) {
        assert!(i < self.len && v <= self.mask());
        let shift = (i % self.per_word) as u32 * self.bits;
        let mask = self.mask();
        let word = &mut self.words[i / self.per_word];
        *word = (*word & !(mask << shift)) | (v << shift);
    }

    pub fn push(&mut self, v: u64) {
        if self.len.is_multiple_of(self.per_word) {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, v);
    }
}

/// Levels of successive passes: `w - k, w - 2k, ...`, ending at `0`.
pub fn scan_levels(width: u32, bits_per_scan: u32) -> Vec<u32> {
    let k = bits_per_scan.max(1);
    (1..=width.div_ceil(k))
        .map(|s| width.saturating_sub(s * k))
        .collect()
}

/// Builds the lossy store of `cfg` from `reader` in `w` passes.
pub fn read_multiscan<R: InputReader + ?Sized>(
    reader: &mut R,
    cfg: &Config,
) -> Result<CompressedStore> {
    read_multiscan_with(reader, cfg, 1)
}

/// As [`read_multiscan`], consuming `bits_per_scan` new bits per pass.
pub fn read_multiscan_with<R: InputReader + ?Sized>(
    reader: &mut R,
    cfg: &Config,
    bits_per_scan: u32,
) -> Result<CompressedStore> {
    if bits_per_scan == 0 {
        return Err(Error::Config("bits per scan must be at least 1".into()));
    }
    let w = cfg.width;
    let gamma = cfg.gamma;
    let levels = scan_levels(w, bits_per_scan);
    // 0: height unknown; 1..γ-1: height minus last level; `done`: in F
    let done = u64::from(gamma.max(1));
    let mut state = PackedCounters::new(64 - done.leading_zeros());
    let prefix_cfg = Config::with_rho(cfg.dim, w, 0, cfg.rho)?;

    let mut finalized = CompressedStore::empty(*cfg, Mode::Lossy);
    let mut prefixes: Option<CompressedStore> = None;
    let mut n = 0usize;

    for (s, &level) in levels.iter().enumerate() {
        let tested = (s > 0).then(|| {
            let top = if s >= 2 { levels[s - 2] - 1 } else { w };
            (levels[s - 1], top)
        });
        let mut fresh = CompressedStore::empty(*cfg, Mode::Lossy);
        let mut next = CompressedStore::empty_multiset(prefix_cfg, Mode::Lossy);
        let counter = UnionCounter {
            parts: prefixes
                .iter()
                .map(|u| u as &dyn crate::qtree::PointSource)
                .chain(std::iter::once(
                    &finalized as &dyn crate::qtree::PointSource,
                ))
                .collect(),
            width: w,
        };
        let mut seen = 0usize;
        reader.scan(level, &mut |j, p| {
            if s == 0 {
                state.push(0);
            } else if j >= n {
                return Err(Error::CorruptFile("input grew between passes".into()));
            }
            seen += 1;
            let st = state.get(j);
            if st == done {
                return Ok(());
            }
            let height = if st != 0 {
                Some(levels[s - 1] + st as u32)
            } else {
                tested.and_then(|(lo, hi)| max_uncrowded_height(&p, lo, hi, &counter))
            };
            match height {
                Some(h) if level == 0 || level + gamma <= h => {
                    fresh.insert(HeightedPoint {
                        point: round_point(&p, h, gamma),
                        height: h,
                    })?;
                    state.set(j, done);
                }
                Some(h) => {
                    state.set(j, u64::from(h - level));
                    next.insert(HeightedPoint {
                        point: p,
                        height: level,
                    })?;
                }
                None => next.insert(HeightedPoint {
                    point: p,
                    height: level,
                })?,
            }
            Ok(())
        })?;
        drop(counter);
        if s == 0 {
            n = seen;
        } else if seen != n {
            return Err(Error::CorruptFile(format!(
                "input changed between passes: {n} points, then {seen}"
            )));
        }
        finalized = merge(&finalized, &fresh)?;
        prefixes = Some(next);
    }

    // points still crowded at the last tested level, now at full precision
    if let Some(rest) = prefixes.filter(|u| !u.is_empty()) {
        let top = if levels.len() >= 2 {
            levels[levels.len() - 2] - 1
        } else {
            w
        };
        let mut fresh = CompressedStore::empty(*cfg, Mode::Lossy);
        {
            let counter = UnionCounter {
                parts: vec![&rest, &finalized],
                width: w,
            };
            for hp in rest.iter() {
                let p = hp?.point;
                let h = max_uncrowded_height(&p, 0, top, &counter).unwrap_or(0);
                fresh.insert(HeightedPoint {
                    point: round_point(&p, h, gamma),
                    height: h,
                })?;
            }
        }
        finalized = merge(&finalized, &fresh)?;
    }
    Ok(finalized)
}

/// Streams the Morton-order union of two stores into a new one.
fn merge(a: &CompressedStore, b: &CompressedStore) -> Result<CompressedStore> {
    if b.is_empty() {
        return Ok(a.clone());
    }
    let mut failure = None;
    let merged = {
        let mut xs = a.iter().peekable();
        let mut ys = b.iter().peekable();
        let failure = &mut failure;
        let merged = std::iter::from_fn(move || {
            let pick_x = match (xs.peek(), ys.peek()) {
                (None, None) => return None,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (Some(Ok(x)), Some(Ok(y))) => crate::morton::morton_less(&x.point, &y.point),
                (Some(Err(_)), _) => true,
                (_, Some(Err(_))) => false,
            };
            let next = if pick_x { xs.next() } else { ys.next() };
            match next? {
                Ok(hp) => Some(hp),
                Err(e) => {
                    *failure = Some(e);
                    None
                }
            }
        });
        CompressedStore::build(merged, *a.config(), Mode::Lossy)
    };
    match failure {
        Some(e) => Err(e),
        None => merged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::round_set;
    use proptest::prelude::*;

    fn cfg(w: u32, gamma: u32) -> Config {
        Config::new(2, w, gamma).unwrap()
    }

    #[test]
    fn parse_examples() {
        let c = cfg(5, 0);
        assert_eq!(
            parse_point_line("5 2", 1, &c, None).unwrap(),
            Some(Point::new2(5, 2))
        );
        assert_eq!(
            parse_point_line("0.5 0.25", 1, &c, Some(16.0)).unwrap(),
            Some(Point::new2(8, 4))
        );
        assert!(matches!(
            parse_point_line("40 2", 3, &c, None),
            Err(Error::OutOfRange { line: 3, .. })
        ));
        assert_eq!(parse_point_line("  # note", 1, &c, None).unwrap(), None);
        assert_eq!(parse_point_line("", 1, &c, None).unwrap(), None);
        assert!(matches!(
            parse_point_line("1", 7, &c, None),
            Err(Error::Parse { line: 7, .. })
        ));
        assert!(matches!(
            parse_point_line("1 2 3", 7, &c, None),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_point_line("1 x", 7, &c, None),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            parse_point_line("-1 2", 7, &c, None),
            Err(Error::Parse { .. })
        ));
        assert!(parse_point_line("2.0 1", 1, &c, Some(16.0)).is_err());
    }

    #[test]
    fn header_lines() {
        assert_eq!(
            parse_header("# pqc d=3 w=20 scale=1000"),
            Some(InputHeader {
                dim: Some(3),
                width: Some(20),
                scale: Some(1000.0)
            })
        );
        assert_eq!(parse_header("# pqc"), Some(InputHeader::default()));
        assert_eq!(parse_header("# pqcx d=2"), None);
        assert_eq!(parse_header("# just a comment"), None);
        assert_eq!(parse_header("1 2"), None);
    }

    #[test]
    fn packed_counters() {
        let mut c = PackedCounters::new(3);
        for i in 0..100 {
            c.push(i % 8);
        }
        c.set(42, 5);
        assert_eq!(c.get(42), 5);
        assert_eq!(c.get(43), 43 % 8);
        assert_eq!(c.len(), 100);
        assert!(c.heap_bytes() >= 8 * 100usize.div_ceil(21));
    }

    #[test]
    fn levels() {
        assert_eq!(scan_levels(5, 1), vec![4, 3, 2, 1, 0]);
        assert_eq!(scan_levels(10, 3), vec![7, 4, 1, 0]);
        assert_eq!(scan_levels(4, 4), vec![0]);
        assert_eq!(scan_levels(4, 9), vec![0]);
    }

    #[test]
    fn empty_and_single() {
        let c = cfg(8, 2);
        let mut r = MemoryReader::new(vec![]);
        let store = read_multiscan(&mut r, &c).unwrap();
        assert!(store.is_empty());
        assert_eq!(r.passes(), 8);
        let mut r = MemoryReader::new(vec![Point::new2(200, 13)]);
        let got = read_multiscan(&mut r, &c).unwrap().to_vec().unwrap();
        assert_eq!(got, round_set(&[Point::new2(200, 13)], &c).unwrap());
        assert_eq!(got[0].height, 8);
    }

    #[test]
    fn figure_points_match_in_memory() {
        let pts: Vec<Point> = [(5, 2), (6, 3), (8, 4), (9, 6), (10, 6)]
            .iter()
            .map(|&(x, y)| Point::new2(x, y))
            .collect();
        for gamma in 0..=5 {
            let c = cfg(5, gamma);
            let mut r = MemoryReader::new(pts.clone());
            let got = read_multiscan(&mut r, &c).unwrap().to_vec().unwrap();
            assert_eq!(got, round_set(&pts, &c).unwrap(), "gamma {gamma}");
            assert_eq!(r.passes(), 5);
        }
    }

    #[test]
    fn duplicates_are_rejected() {
        let pts = vec![Point::new2(3, 3), Point::new2(9, 1), Point::new2(3, 3)];
        let mut r = MemoryReader::new(pts);
        assert!(matches!(
            read_multiscan(&mut r, &cfg(6, 1)),
            Err(Error::Duplicate(_))
        ));
    }

    fn arb_set(w: u32, max_n: usize) -> impl Strategy<Value = Vec<Point>> {
        proptest::collection::hash_set((0..1u32 << w, 0..1u32 << w), 0..max_n)
            .prop_map(|s| s.into_iter().map(|(x, y)| Point::new2(x, y)).collect())
    }

    proptest! {
        #[test]
        fn multiscan_equals_round_then_build(pts in arb_set(7, 60), gamma in 0u32..=7, k in 1u32..=8) {
            let c = cfg(7, gamma);
            let mut r = MemoryReader::new(pts.clone());
            let got = read_multiscan_with(&mut r, &c, k).unwrap();
            let want = round_set(&pts, &c).unwrap();
            prop_assert_eq!(got.to_vec().unwrap(), want.clone());
            prop_assert_eq!(r.passes(), 7usize.div_ceil(k as usize));
            let batch = CompressedStore::build(want, c, Mode::Lossy).unwrap();
            prop_assert_eq!(got.to_bytes(), batch.to_bytes());
        }

        #[test]
        fn multiscan_3d(pts in proptest::collection::hash_set((0..64u32, 0..64u32, 0..64u32), 0..40), gamma in 0u32..=3) {
            let pts: Vec<Point> = pts.into_iter().map(|(x, y, z)| Point::new3(x, y, z)).collect();
            let c = Config::new(3, 6, gamma).unwrap();
            let mut r = MemoryReader::new(pts.clone());
            let got = read_multiscan(&mut r, &c).unwrap();
            prop_assert_eq!(got.to_vec().unwrap(), round_set(&pts, &c).unwrap());
        }
    }
}
