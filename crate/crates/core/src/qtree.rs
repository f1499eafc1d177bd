//! Implicit quadtree queries over any Morton-sorted point sequence.
//!
//! Nothing here materializes tree nodes: a trie square maps to a contiguous
//! Morton key interval, so `Vertices` is two successor searches and crowding
//! is a handful of those. The same code runs over a plain sorted array and
//! over the compressed store.

use crate::error::{Error, Result};
use crate::geom::{self, ClippedVoronoiCell, HeightedPoint};
use crate::morton::{interleave, morton_cmp, Config, MortonKey, Point, TrieSquare};

/// Half-open rank interval `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VertexRange {
    pub lo: usize,
    pub hi: usize,
}

impl VertexRange {
    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi == self.lo
    }
}

/// A Morton-sorted, duplicate-free point sequence with rank access.
pub trait PointSource {
    fn config(&self) -> &Config;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn point_at(&self, rank: usize) -> Result<HeightedPoint>;

    /// Rank of the first point whose key is `>= key`.
    fn successor_rank(&self, key: MortonKey) -> usize;

    /// True when stored heights are worth trying as leaf heights before
    /// falling back to a search.
    fn has_height_hints(&self) -> bool {
        false
    }

    fn visit_range(
        &self,
        range: VertexRange,
        f: &mut dyn FnMut(usize, &HeightedPoint),
    ) -> Result<()> {
        for rank in range.lo..range.hi {
            let p = self.point_at(rank)?;
            f(rank, &p);
        }
        Ok(())
    }
}

/// Anything that can count the points inside a trie square.
pub trait SquareCounter {
    fn width(&self) -> u32;
    fn count_in(&self, s: &TrieSquare) -> usize;
}

impl<T: PointSource + ?Sized> SquareCounter for T {
    fn width(&self) -> u32 {
        self.config().width
    }

    fn count_in(&self, s: &TrieSquare) -> usize {
        vertices(s, self).len()
    }
}

/// Several disjoint sources viewed as one multiset for counting.
pub struct UnionCounter<'a> {
    pub parts: Vec<&'a dyn PointSource>,
    pub width: u32,
}

impl SquareCounter for UnionCounter<'_> {
    fn width(&self) -> u32 {
        self.width
    }

    fn count_in(&self, s: &TrieSquare) -> usize {
        self.parts.iter().map(|p| vertices(s, *p).len()).sum()
    }
}

/// Plain in-memory Morton-sorted array.
#[derive(Clone, Debug)]
pub struct SortedPoints {
    config: Config,
    points: Vec<HeightedPoint>,
    keys: Vec<MortonKey>,
    height_hints: bool,
}

impl SortedPoints {
    /// Sorts `points` into Morton order; rejects duplicates and points outside
    /// the domain. Heights are set to zero.
    pub fn new(config: Config, points: &[Point]) -> Result<Self> {
        for p in points {
            config.check_point(p)?;
        }
        let mut pts: Vec<HeightedPoint> = points
            .iter()
            .map(|&point| HeightedPoint { point, height: 0 })
            .collect();
        pts.sort_by(|a, b| morton_cmp(&a.point, &b.point));
        Self::from_sorted(config, pts, false)
    }

    pub fn from_sorted(
        config: Config,
        points: Vec<HeightedPoint>,
        height_hints: bool,
    ) -> Result<Self> {
        let keys: Vec<MortonKey> = points.iter().map(|p| interleave(&p.point)).collect();
        for (i, w) in keys.windows(2).enumerate() {
            if w[0] == w[1] {
                return Err(Error::Duplicate(points[i].point.coords().to_vec()));
            }
            if w[0] > w[1] {
                return Err(Error::Unsorted(i + 1));
            }
        }
        Ok(SortedPoints {
            config,
            points,
            keys,
            height_hints,
        })
    }

    pub fn points(&self) -> &[HeightedPoint] {
        &self.points
    }
}

impl PointSource for SortedPoints {
    fn config(&self) -> &Config {
        &self.config
    }

    fn len(&self) -> usize {
        self.points.len()
    }

    fn point_at(&self, rank: usize) -> Result<HeightedPoint> {
        self.points
            .get(rank)
            .copied()
            .ok_or(Error::RankOutOfBounds {
                rank,
                len: self.points.len(),
            })
    }

    fn successor_rank(&self, key: MortonKey) -> usize {
        self.keys.partition_point(|k| *k < key)
    }

    fn has_height_hints(&self) -> bool {
        self.height_hints
    }

    fn visit_range(
        &self,
        range: VertexRange,
        f: &mut dyn FnMut(usize, &HeightedPoint),
    ) -> Result<()> {
        for (i, p) in self.points[range.lo..range.hi].iter().enumerate() {
            f(range.lo + i, p);
        }
        Ok(())
    }
}

/// Ranks of the points inside `s`.
pub fn vertices<S: PointSource + ?Sized>(s: &TrieSquare, src: &S) -> VertexRange {
    let (lo_key, hi_key) = s.key_range();
    let lo = src.successor_rank(lo_key);
    let hi = src.successor_rank(hi_key);
    VertexRange { lo, hi }
}

/// Two or more points, or exactly one with a nonempty equal-size neighbour.
pub fn is_crowded<C: SquareCounter + ?Sized>(s: &TrieSquare, src: &C) -> bool {
    match src.count_in(s) {
        0 => false,
        1 => s.neighbours(src.width()).any(|n| src.count_in(&n) > 0),
        _ => true,
    }
}

fn check_query(p: &Point, cfg: &Config) -> Result<()> {
    cfg.check_point(p)
}

/// Largest uncrowded trie square containing `p`.
///
/// When every square down to unit size is crowded (points at adjacent grid
/// cells) the unit square is returned.
pub fn square_of<S: PointSource + ?Sized>(p: &Point, src: &S) -> Result<TrieSquare> {
    check_query(p, src.config())?;
    if src.has_height_hints() {
        if let Some(s) = hinted_square(p, src)? {
            return Ok(s);
        }
    }
    Ok(square_of_counted(p, src))
}

fn hinted_square<S: PointSource + ?Sized>(p: &Point, src: &S) -> Result<Option<TrieSquare>> {
    let rank = src.successor_rank(interleave(p));
    if rank >= src.len() {
        return Ok(None);
    }
    let hp = src.point_at(rank)?;
    if hp.point != *p {
        return Ok(None);
    }
    let w = src.config().width;
    let s = TrieSquare::containing(p, hp.height.min(w));
    let parent_ok = match s.parent(w) {
        Some(parent) => is_crowded(&parent, src),
        None => true,
    };
    Ok((parent_ok && !is_crowded(&s, src)).then_some(s))
}

/// Binary search over heights against any counter. Uncrowdedness is monotone
/// under descent, so the uncrowded heights form a prefix `0..=H`.
pub fn square_of_counted<C: SquareCounter + ?Sized>(p: &Point, src: &C) -> TrieSquare {
    let w = src.width();
    let mut lo: i64 = -1;
    let mut hi: i64 = i64::from(w) + 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if is_crowded(&TrieSquare::containing(p, mid as u32), src) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    TrieSquare::containing(p, lo.max(0) as u32)
}

/// Largest uncrowded height in `[lo, hi]` for the square containing `p`,
/// given that height `hi + 1` is crowded (or `hi` is the root). `None` when
/// even height `lo` is crowded.
pub fn max_uncrowded_height<C: SquareCounter + ?Sized>(
    p: &Point,
    lo: u32,
    hi: u32,
    src: &C,
) -> Option<u32> {
    if is_crowded(&TrieSquare::containing(p, lo), src) {
        return None;
    }
    let (mut ok, mut bad) = (lo, hi + 1);
    while bad - ok > 1 {
        let mid = ok + (bad - ok) / 2;
        if is_crowded(&TrieSquare::containing(p, mid), src) {
            bad = mid;
        } else {
            ok = mid;
        }
    }
    Some(ok)
}

/// Points within Euclidean distance `radius` of `center` (excluding `center`
/// itself), found by range-searching the trie squares that cover the box.
/// Returns the points and the number of squares searched.
pub fn gather_within<S: PointSource + ?Sized>(
    center: &Point,
    radius: u64,
    src: &S,
) -> Result<(Vec<Point>, usize)> {
    let cfg = src.config();
    let w = cfg.width;
    let max = u64::from(cfg.max_coord());
    let radius = radius.max(1);
    let mut g = 64 - (radius - 1).leading_zeros();
    g = g.min(w);
    let d = cfg.dim as usize;
    let mut lo = [0u64; 3];
    let mut hi = [0u64; 3];
    for axis in 0..d {
        let c = u64::from(center.get(axis));
        lo[axis] = c.saturating_sub(radius) >> g;
        hi[axis] = c.saturating_add(radius).min(max) >> g;
    }
    let r2 = u128::from(radius) * u128::from(radius);
    let mut found = Vec::new();
    let mut squares = 0usize;
    let mut idx = lo;
    loop {
        let mut corner = Point::origin(cfg.dim);
        for (axis, c) in corner.coords_mut().iter_mut().enumerate() {
            *c = (idx[axis] << g) as u32;
        }
        let s = TrieSquare { corner, height: g };
        squares += 1;
        let range = vertices(&s, src);
        if !range.is_empty() {
            src.visit_range(range, &mut |_, hp| {
                if hp.point != *center && hp.point.dist2(center) <= r2 {
                    found.push(hp.point);
                }
            })?;
        }
        // odometer over the box of square indices
        let mut axis = 0;
        loop {
            if axis == d {
                return Ok((found, squares));
            }
            if idx[axis] < hi[axis] {
                idx[axis] += 1;
                break;
            }
            idx[axis] = lo[axis];
            axis += 1;
        }
    }
}

/// Nearest stored point other than `p` itself, with its squared distance.
///
/// Scans the 3^d block of height-`h` squares around `p`; anything outside that
/// block is at least `2^h` away, so a hit within `2^h` is final.
pub fn nearest_neighbour<S: PointSource + ?Sized>(
    p: &Point,
    src: &S,
) -> Result<Option<(Point, u128)>> {
    Ok(nearest_neighbour_counted(p, src)?.0)
}

pub(crate) fn nearest_neighbour_counted<S: PointSource + ?Sized>(
    p: &Point,
    src: &S,
) -> Result<(Option<(Point, u128)>, usize)> {
    let cfg = src.config();
    check_query(p, cfg)?;
    let w = cfg.width;
    let mut squares = 0usize;
    let mut h = 0u32;
    let mut settled = false;
    loop {
        let home = TrieSquare::containing(p, h);
        let mut best: Option<(Point, u128)> = None;
        for s in std::iter::once(home).chain(home.neighbours(w)) {
            squares += 1;
            let range = vertices(&s, src);
            if range.is_empty() {
                continue;
            }
            src.visit_range(range, &mut |_, hp| {
                if hp.point == *p {
                    return;
                }
                let d2 = hp.point.dist2(p);
                let better = match best {
                    None => true,
                    Some((q, bd)) => d2 < bd || (d2 == bd && morton_cmp(&hp.point, &q).is_lt()),
                };
                if better {
                    best = Some((hp.point, d2));
                }
            })?;
        }
        match best {
            Some((_, d2)) if settled || d2 <= 1u128 << (2 * h) || h == w => {
                return Ok((best, squares));
            }
            Some((_, d2)) => {
                // rescan once at a height whose block covers the candidate ball
                let mut next = h + 1;
                while next < w && (1u128 << (2 * next)) < d2 {
                    next += 1;
                }
                h = next;
                settled = true;
            }
            None if h >= w => return Ok((None, squares)),
            None => h += 1,
        }
    }
}

/// Restricted Voronoi cell of `v` within the domain box, clipped at `2ρ·NN(v)`
/// where `ρ` comes from the source configuration. For a ρ-well-spaced source
/// the clip never binds and the cell is exact.
pub fn restricted_voronoi<S: PointSource + ?Sized>(
    v: &Point,
    src: &S,
) -> Result<ClippedVoronoiCell> {
    let beta = 2.0 * src.config().rho;
    geom::clipped_voronoi(v, beta, src)
}

/// Candidate Voronoi neighbours of `v` for any dimension: every stored point
/// within `2·(2ρ)·NN(v)`.
pub fn voronoi_candidates<S: PointSource + ?Sized>(v: &Point, src: &S) -> Result<Vec<Point>> {
    let (nn, _) = nearest_neighbour_counted(v, src)?;
    let (_, nn2) = nn.ok_or(Error::TooFewPoints)?;
    let reach = 4.0 * src.config().rho * (nn2 as f64).sqrt();
    let (mut pts, _) = gather_within(v, reach.ceil() as u64 + 1, src)?;
    pts.sort_by_key(|q| q.dist2(v));
    Ok(pts)
}
