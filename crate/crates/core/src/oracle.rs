//! Slow reference implementations for tests and benchmarks: a materialized
//! quadtree, quadratic Voronoi cells, jittered-grid ε-nets and a
//! well-spacedness checker. Nothing here is tuned.

use std::collections::BinaryHeap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::morton::{morton_cmp, Config, Point, TrieSquare};

#[derive(Clone, Debug)]
pub struct QuadNode {
    pub square: TrieSquare,
    pub children: Option<Vec<usize>>,
    pub points: Vec<Point>,
}

/// Pointer-based quadtree (octree in 3D) over an explicit point list.
#[derive(Clone, Debug)]
pub struct ExplicitQuadtree {
    pub width: u32,
    pub nodes: Vec<QuadNode>,
}

fn boxes_touch(a: &TrieSquare, b: &TrieSquare) -> bool {
    let (sa, sb) = (a.side() as i64, b.side() as i64);
    (0..a.corner.dim() as usize).all(|i| {
        let (a0, b0) = (i64::from(a.corner.get(i)), i64::from(b.corner.get(i)));
        a0 <= b0 + sb && b0 <= a0 + sa
    })
}

fn count_in(points: &[Point], s: &TrieSquare) -> usize {
    points.iter().filter(|p| s.contains(p)).count()
}

/// Crowding by direct counting over the whole point list.
pub fn brute_crowded(points: &[Point], s: &TrieSquare, width: u32) -> bool {
    match count_in(points, s) {
        0 => false,
        1 => s.neighbours(width).any(|n| count_in(points, &n) > 0),
        _ => true,
    }
}

impl ExplicitQuadtree {
    /// Splits the largest leaf that is crowded (or, with `enforce_balance`,
    /// touches a leaf a quarter its side) until no such leaf remains.
    pub fn build(points: &[Point], cfg: &Config, enforce_balance: bool) -> Self {
        let mut tree = ExplicitQuadtree {
            width: cfg.width,
            nodes: vec![QuadNode {
                square: cfg.root(),
                children: None,
                points: points.to_vec(),
            }],
        };
        let mut heap: BinaryHeap<(u32, usize)> = BinaryHeap::new();
        heap.push((cfg.width, 0));
        while let Some((_, id)) = heap.pop() {
            if tree.nodes[id].children.is_some() || tree.nodes[id].square.height == 0 {
                continue;
            }
            let s = tree.nodes[id].square;
            let split =
                brute_crowded(points, &s, cfg.width) || (enforce_balance && tree.is_unbalanced(id));
            if !split {
                continue;
            }
            let kids = tree.split(id);
            for &k in &kids {
                heap.push((tree.nodes[k].square.height, k));
            }
            if enforce_balance {
                // larger neighbours may now be unbalanced
                for leaf in tree.leaves_touching(&s) {
                    heap.push((tree.nodes[leaf].square.height, leaf));
                }
            }
        }
        tree
    }

    fn split(&mut self, id: usize) -> Vec<usize> {
        let s = self.nodes[id].square;
        let pts = std::mem::take(&mut self.nodes[id].points);
        let mut kids = Vec::new();
        for c in 0..(1usize << s.corner.dim()) {
            let square = crate::morton::child(&s, c).expect("height is positive");
            let points = pts.iter().copied().filter(|p| square.contains(p)).collect();
            kids.push(self.nodes.len());
            self.nodes.push(QuadNode {
                square,
                children: None,
                points,
            });
        }
        self.nodes[id].children = Some(kids.clone());
        kids
    }

    fn leaves_touching(&self, s: &TrieSquare) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if !boxes_touch(&node.square, s) {
                continue;
            }
            match &node.children {
                Some(kids) => stack.extend(kids.iter().copied()),
                None => out.push(id),
            }
        }
        out
    }

    fn is_unbalanced(&self, id: usize) -> bool {
        let s = self.nodes[id].square;
        self.leaves_touching(&s)
            .into_iter()
            .any(|l| l != id && self.nodes[l].square.height + 2 <= s.height)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &QuadNode> {
        self.nodes.iter().filter(|n| n.children.is_none())
    }

    /// Leaf containing `p`.
    pub fn leaf_of(&self, p: &Point) -> &QuadNode {
        let mut id = 0;
        while let Some(kids) = &self.nodes[id].children {
            id = *kids
                .iter()
                .find(|&&k| self.nodes[k].square.contains(p))
                .expect("children partition the parent");
        }
        &self.nodes[id]
    }

    pub fn leaf_height(&self, p: &Point) -> u32 {
        self.leaf_of(p).square.height
    }

    /// All points inside `s`, found by walking the tree.
    pub fn points_in(&self, s: &TrieSquare) -> Vec<Point> {
        let mut out: Vec<Point> = Vec::new();
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            let ns = node.square;
            let overlaps = ns.contains(&s.corner) || s.contains(&ns.corner);
            if !overlaps {
                continue;
            }
            match &node.children {
                Some(kids) => stack.extend(kids.iter().copied()),
                None => out.extend(node.points.iter().copied().filter(|p| s.contains(p))),
            }
        }
        out.sort_by(morton_cmp);
        out
    }
}

pub fn build_explicit_quadtree(
    points: &[Point],
    cfg: &Config,
    enforce_balance: bool,
) -> ExplicitQuadtree {
    ExplicitQuadtree::build(points, cfg, enforce_balance)
}

/// Input plus the centre of every empty leaf of the balanced quadtree: a
/// simple well-spaced superset used as a size yardstick.
pub fn quadtree_superset(points: &[Point], cfg: &Config) -> Vec<Point> {
    let tree = ExplicitQuadtree::build(points, cfg, true);
    let mut out = points.to_vec();
    for leaf in tree.leaves() {
        if leaf.points.is_empty() {
            let half = (leaf.square.side() / 2) as u32;
            let mut c = leaf.square.corner;
            for x in c.coords_mut() {
                *x += half;
            }
            if !out.contains(&c) {
                out.push(c);
            }
        }
    }
    out
}

type Q = BigRational;

fn qi(v: i128) -> Q {
    Q::from_integer(BigInt::from(v))
}

/// Voronoi cell of one site, restricted to the domain box.
#[derive(Clone, Debug)]
pub struct BruteCell {
    pub site: Point,
    pub polygon: Vec<[Q; 2]>,
    /// Sites sharing a positive-length edge, in Morton order.
    pub neighbors: Vec<Point>,
    pub nn2: u128,
    /// Squared distance to the farthest cell vertex.
    pub far2: Q,
}

impl BruteCell {
    /// Squared aspect ratio.
    pub fn aspect2(&self) -> Q {
        &self.far2 / qi(self.nn2 as i128)
    }

    pub fn aspect(&self) -> f64 {
        self.aspect2().to_f64().unwrap_or(f64::INFINITY).sqrt()
    }
}

/// Signed side of `x` relative to the bisector of `site` and `other`:
/// negative means closer to `site`.
fn side(x: &[Q; 2], site: &Point, other: &Point) -> Q {
    let (sx, sy) = (qi(site.get(0).into()), qi(site.get(1).into()));
    let (ox, oy) = (qi(other.get(0).into()), qi(other.get(1).into()));
    let ds = (&x[0] - &sx) * (&x[0] - &sx) + (&x[1] - &sy) * (&x[1] - &sy);
    let do_ = (&x[0] - &ox) * (&x[0] - &ox) + (&x[1] - &oy) * (&x[1] - &oy);
    ds - do_
}

fn cut(poly: Vec<[Q; 2]>, site: &Point, other: &Point) -> Vec<[Q; 2]> {
    let n = poly.len();
    let vals: Vec<Q> = poly.iter().map(|x| side(x, site, other)).collect();
    let mut out = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        if !vals[i].is_positive() {
            out.push(poly[i].clone());
        }
        if vals[i].is_positive() != vals[j].is_positive()
            && !vals[i].is_zero()
            && !vals[j].is_zero()
        {
            let t = &vals[i] / (&vals[i] - &vals[j]);
            out.push([
                &poly[i][0] + (&poly[j][0] - &poly[i][0]) * &t,
                &poly[i][1] + (&poly[j][1] - &poly[i][1]) * &t,
            ]);
        }
    }
    let mut clean: Vec<[Q; 2]> = Vec::new();
    for p in out {
        if clean.last() != Some(&p) {
            clean.push(p);
        }
    }
    while clean.len() > 1 && clean.first() == clean.last() {
        clean.pop();
    }
    clean
}

/// Half-plane `a·x + b·y <= c`; `other` is the far site for bisectors.
#[derive(Clone, Copy, Debug)]
struct Edge {
    a: i128,
    b: i128,
    c: i128,
    other: Option<Point>,
}

/// Homogeneous vertex `(X/W, Y/W)` with `W > 0`.
type HVertex = (i128, i128, i128);

fn meet(e: &Edge, f: &Edge) -> Option<HVertex> {
    let w = e.a.checked_mul(f.b)?.checked_sub(f.a.checked_mul(e.b)?)?;
    let x = e.c.checked_mul(f.b)?.checked_sub(f.c.checked_mul(e.b)?)?;
    let y = e.a.checked_mul(f.c)?.checked_sub(f.a.checked_mul(e.c)?)?;
    match w.signum() {
        1 => Some((x, y, w)),
        -1 => Some((-x, -y, -w)),
        _ => None,
    }
}

/// Sign of `a·x + b·y - c` at the vertex.
fn offset(e: &Edge, v: &HVertex) -> Option<i128> {
    let t = e.a.checked_mul(v.0)?.checked_add(e.b.checked_mul(v.1)?)?;
    Some(t.checked_sub(e.c.checked_mul(v.2)?)?.signum())
}

/// Whether every vertex lies within half of `sqrt(dist2)` of the site.
fn all_within_half(vs: &[HVertex], site: &Point, dist2: u128) -> Option<bool> {
    let d = i128::try_from(dist2).ok()?;
    let (sx, sy) = (i128::from(site.get(0)), i128::from(site.get(1)));
    for &(x, y, w) in vs {
        let dx = x.checked_sub(sx.checked_mul(w)?)?;
        let dy = y.checked_sub(sy.checked_mul(w)?)?;
        let num = dx.checked_mul(dx)?.checked_add(dy.checked_mul(dy)?)?;
        if num.checked_mul(4)? > d.checked_mul(w.checked_mul(w)?)? {
            return Some(false);
        }
    }
    Some(true)
}

/// Cell by clipping a list of edge lines in exact `i128` arithmetic. `None`
/// when an intermediate value overflows.
fn integer_cell(
    site: &Point,
    sorted_others: &[Point],
    width: u32,
    prune: bool,
) -> Option<(Vec<[Q; 2]>, Vec<Point>)> {
    let m = (1i128 << width) - 1;
    let boxed = |a, b, c| Edge {
        a,
        b,
        c,
        other: None,
    };
    // counterclockwise from the bottom side; vertex i joins edges i and i+1
    let mut edges = vec![
        boxed(0, -1, 0),
        boxed(1, 0, m),
        boxed(0, 1, m),
        boxed(-1, 0, 0),
    ];
    let vertices = |edges: &[Edge]| -> Option<Vec<HVertex>> {
        let n = edges.len();
        (0..n)
            .map(|i| meet(&edges[i], &edges[(i + 1) % n]))
            .collect()
    };
    let mut verts = vertices(&edges)?;
    let (sx, sy) = (i128::from(site.get(0)), i128::from(site.get(1)));
    for q in sorted_others {
        if prune && all_within_half(&verts, site, q.dist2(site))? {
            break;
        }
        let (qx, qy) = (i128::from(q.get(0)), i128::from(q.get(1)));
        let cut = Edge {
            a: 2 * (qx - sx),
            b: 2 * (qy - sy),
            c: qx * qx + qy * qy - sx * sx - sy * sy,
            other: Some(*q),
        };
        let signs: Vec<i128> = verts
            .iter()
            .map(|v| offset(&cut, v))
            .collect::<Option<_>>()?;
        if !signs.iter().any(|&s| s > 0) {
            continue;
        }
        let n = edges.len();
        let mut next = Vec::with_capacity(n + 1);
        for i in 0..n {
            // edge i runs from vertex i-1 to vertex i
            let (from, to) = (signs[(i + n - 1) % n], signs[i]);
            if from.min(to) < 0 || (from == 0 && to == 0) {
                next.push(edges[i]);
            }
            if from <= 0 && to > 0 {
                next.push(cut);
            }
        }
        edges = next;
        verts = vertices(&edges)?;
    }
    let exact: Vec<[Q; 2]> = verts
        .iter()
        .map(|&(x, y, w)| [Q::new(x.into(), w.into()), Q::new(y.into(), w.into())])
        .collect();
    let n = exact.len();
    let mut neighbors: Vec<Point> = (0..n)
        .filter(|&i| exact[(i + n - 1) % n] != exact[i])
        .filter_map(|i| edges[i].other)
        .collect();
    let mut polygon: Vec<[Q; 2]> = Vec::with_capacity(n);
    for p in exact {
        if polygon.last() != Some(&p) {
            polygon.push(p);
        }
    }
    while polygon.len() > 1 && polygon.first() == polygon.last() {
        polygon.pop();
    }
    neighbors.sort_by(morton_cmp);
    neighbors.dedup();
    Some((polygon, neighbors))
}

fn cell_from(site: &Point, others: &[Point], width: u32, prune: bool) -> Result<BruteCell> {
    if site.dim() != 2 {
        return Err(Error::UnsupportedDimension(site.dim()));
    }
    let mut others: Vec<Point> = others.iter().copied().filter(|q| q != site).collect();
    if others.is_empty() {
        return Err(Error::TooFewPoints);
    }
    others.sort_by(|a, b| a.dist2(site).cmp(&b.dist2(site)).then(morton_cmp(a, b)));
    integer_cell(site, &others, width, prune)
        .map(|(polygon, neighbors)| finish(site, &others, polygon, neighbors))
        .unwrap_or_else(|| rational_cell(site, &others, width, prune))
}

fn finish(
    site: &Point,
    sorted_others: &[Point],
    polygon: Vec<[Q; 2]>,
    neighbors: Vec<Point>,
) -> Result<BruteCell> {
    let s = [qi(site.get(0).into()), qi(site.get(1).into())];
    let d2 = |p: &[Q; 2]| (&p[0] - &s[0]) * (&p[0] - &s[0]) + (&p[1] - &s[1]) * (&p[1] - &s[1]);
    let far2 = polygon.iter().map(d2).max().unwrap_or_else(Q::zero);
    Ok(BruteCell {
        site: *site,
        polygon,
        neighbors,
        nn2: sorted_others[0].dist2(site),
        far2,
    })
}

fn rational_cell(
    site: &Point,
    sorted_others: &[Point],
    width: u32,
    prune: bool,
) -> Result<BruteCell> {
    let s = [qi(site.get(0).into()), qi(site.get(1).into())];
    let d2 = |p: &[Q; 2]| (&p[0] - &s[0]) * (&p[0] - &s[0]) + (&p[1] - &s[1]) * (&p[1] - &s[1]);
    let m = (1i128 << width) - 1;
    let mut poly = vec![
        [qi(0), qi(0)],
        [qi(m), qi(0)],
        [qi(m), qi(m)],
        [qi(0), qi(m)],
    ];
    for q in sorted_others {
        if prune {
            let reach = poly.iter().map(d2).max().unwrap_or_else(Q::zero);
            if reach * qi(4) <= qi(q.dist2(site) as i128) {
                break;
            }
        }
        poly = cut(poly, site, q);
    }
    let n = poly.len();
    let mut neighbors = Vec::new();
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[(i + 1) % n]);
        if a == b {
            continue;
        }
        for q in sorted_others {
            if side(a, site, q).is_zero() && side(b, site, q).is_zero() {
                if !neighbors.contains(q) {
                    neighbors.push(*q);
                }
                break;
            }
        }
    }
    neighbors.sort_by(morton_cmp);
    finish(site, sorted_others, poly, neighbors)
}

/// Cell of `v` cut by every other point's bisector, inside `[0, 2^w - 1]^2`.
pub fn brute_voronoi(points: &[Point], v: &Point, width: u32) -> Result<BruteCell> {
    cell_from(v, points, width, false)
}

/// As [`brute_voronoi`], skipping bisectors that provably miss the cell.
pub fn brute_voronoi_pruned(points: &[Point], v: &Point, width: u32) -> Result<BruteCell> {
    cell_from(v, points, width, true)
}

/// Polygon with repeated and collinear vertices removed, as a sorted vertex
/// list, for comparing polygons built by different clipping orders.
pub fn canonical_polygon(poly: &[[Q; 2]]) -> Vec<[Q; 2]> {
    let mut pts: Vec<[Q; 2]> = Vec::new();
    for p in poly {
        if !pts.contains(p) {
            pts.push(p.clone());
        }
    }
    let mut changed = true;
    while changed && pts.len() > 2 {
        changed = false;
        let n = pts.len();
        for i in 0..n {
            let (a, b, c) = (&pts[(i + n - 1) % n], &pts[i], &pts[(i + 1) % n]);
            let cross = (&b[0] - &a[0]) * (&c[1] - &a[1]) - (&b[1] - &a[1]) * (&c[0] - &a[0]);
            if cross.is_zero() {
                pts.remove(i);
                changed = true;
                break;
            }
        }
    }
    pts.sort();
    pts
}

/// Sum of cell areas (shoelace), exact.
pub fn polygon_area(poly: &[[Q; 2]]) -> Q {
    let n = poly.len();
    let mut twice = Q::zero();
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[(i + 1) % n]);
        twice += &a[0] * &b[1] - &b[0] * &a[1];
    }
    twice.abs() / qi(2)
}

/// Parameters of a jittered-grid ε-net over the whole `2^w` domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonNetSpec {
    pub dim: u8,
    pub width: u32,
    /// Target spacing of the grid.
    pub f0: u32,
    /// Jitter as a fraction of the spacing, in `(0, 1)`; zero disables it.
    pub epsilon: f64,
}

impl EpsilonNetSpec {
    pub fn new(width: u32, f0: u32, epsilon: f64) -> Self {
        EpsilonNetSpec {
            dim: 2,
            width,
            f0,
            epsilon,
        }
    }

    fn validate(&self) -> Result<()> {
        Config::new(self.dim, self.width, 0)?;
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!(
                "epsilon must be in [0, 1), got {}",
                self.epsilon
            )));
        }
        if self.f0 < 4 || u64::from(self.f0) > 1u64 << self.width {
            return Err(Error::Config(format!(
                "spacing {} does not fit a {}-bit domain",
                self.f0, self.width
            )));
        }
        Ok(())
    }

    /// Grid cells per axis.
    pub fn cells_per_axis(&self) -> u64 {
        ((1u64 << self.width) as f64 / f64::from(self.f0))
            .round()
            .max(1.0) as u64
    }

    /// Actual grid spacing after fitting the domain.
    pub fn spacing(&self) -> f64 {
        (1u64 << self.width) as f64 / self.cells_per_axis() as f64
    }

    /// Largest per-axis displacement from a grid centre.
    pub fn jitter(&self) -> u64 {
        (self.epsilon * self.spacing() / 4.0).floor() as u64
    }

    /// Aspect-ratio bound that holds by construction: the farthest cell point
    /// is within half a grid diagonal plus the jitter, and neighbours are at
    /// least a spacing minus twice the jitter apart.
    pub fn advertised_rho(&self) -> f64 {
        let d = f64::from(self.dim);
        let s = self.spacing();
        let delta = self.jitter() as f64 * d.sqrt() + 1.0;
        (s * d.sqrt() / 2.0 + delta) / (s - 2.0 * delta)
    }

    pub fn point_count(&self) -> u64 {
        self.cells_per_axis().pow(u32::from(self.dim))
    }
}

/// Jittered grid; deterministic for a given seed.
pub fn generate_epsilon_net(spec: &EpsilonNetSpec, seed: u64) -> Result<Vec<Point>> {
    spec.validate()?;
    let k = spec.cells_per_axis();
    let side = 1u64 << spec.width;
    let jitter = spec.jitter() as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim as usize;
    let total = spec.point_count();
    let mut out = Vec::with_capacity(total as usize);
    for idx in 0..total {
        let mut coords = [0u32; 3];
        let mut rest = idx;
        for c in coords.iter_mut().take(d) {
            let i = rest % k;
            rest /= k;
            let centre = ((2 * i + 1) * side / (2 * k)) as i64;
            let off = if jitter > 0 {
                rng.gen_range(-jitter..=jitter)
            } else {
                0
            };
            *c = (centre + off).clamp(0, side as i64 - 1) as u32;
        }
        out.push(Point::from_slice(&coords[..d]));
    }
    Ok(out)
}

/// Outcome of a well-spacedness check.
#[derive(Clone, Debug)]
pub struct SpacingCheck {
    pub ok: bool,
    pub max_aspect: f64,
    pub worst: Option<Point>,
}

/// Every cell's aspect ratio is at most `rho` (exact comparison).
pub fn check_well_spaced(points: &[Point], width: u32, rho: f64) -> Result<SpacingCheck> {
    let r = crate::geom::exact_f64(rho);
    let r2 = &r * &r;
    let mut worst: Option<(Q, Point)> = None;
    for p in points {
        let cell = brute_voronoi_pruned(points, p, width)?;
        let a2 = cell.aspect2();
        if worst.as_ref().is_none_or(|(w, _)| a2 > *w) {
            worst = Some((a2, *p));
        }
    }
    Ok(match worst {
        None => SpacingCheck {
            ok: true,
            max_aspect: 0.0,
            worst: None,
        },
        Some((a2, p)) => SpacingCheck {
            ok: a2 <= r2,
            max_aspect: a2.to_f64().unwrap_or(f64::INFINITY).sqrt(),
            worst: Some(p),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qtree::{square_of, SortedPoints};
    use proptest::prelude::*;

    fn cfg(w: u32) -> Config {
        Config::new(2, w, 0).unwrap()
    }

    #[test]
    fn explicit_tree_examples() {
        let pts = [Point::new2(0, 0), Point::new2(7, 7)];
        let t = build_explicit_quadtree(&pts, &cfg(3), false);
        assert_eq!(t.leaf_height(&Point::new2(0, 0)), 1);
        let t = build_explicit_quadtree(&[Point::new2(3, 3)], &cfg(3), false);
        assert_eq!(t.leaf_height(&Point::new2(3, 3)), 3);
        assert_eq!(t.nodes.len(), 1);
    }

    #[test]
    fn balanced_tree_has_no_quarter_neighbours() {
        let pts = [Point::new2(0, 0), Point::new2(1, 0), Point::new2(60, 60)];
        let t = build_explicit_quadtree(&pts, &cfg(6), true);
        for leaf in t.leaves() {
            for other in t.leaves_touching(&leaf.square) {
                let h = t.nodes[other].square.height;
                assert!(h + 2 > leaf.square.height && leaf.square.height + 2 > h);
            }
        }
    }

    #[test]
    fn plus_cell() {
        let pts: Vec<Point> = [(8, 8), (0, 8), (16, 8), (8, 0), (8, 16)]
            .iter()
            .map(|&(x, y)| Point::new2(x, y))
            .collect();
        let c = brute_voronoi(&pts, &Point::new2(8, 8), 5).unwrap();
        let want: Vec<[Q; 2]> = canonical_polygon(&[
            [qi(4), qi(4)],
            [qi(12), qi(4)],
            [qi(12), qi(12)],
            [qi(4), qi(12)],
        ]);
        assert_eq!(canonical_polygon(&c.polygon), want);
        assert_eq!(c.neighbors.len(), 4);
    }

    #[test]
    fn two_points_split_domain() {
        let pts = [Point::new2(0, 0), Point::new2(14, 0)];
        let c = brute_voronoi(&pts, &pts[0], 4).unwrap();
        assert_eq!(polygon_area(&c.polygon), qi(7 * 15));
        assert_eq!(c.neighbors, vec![pts[1]]);
    }

    #[test]
    fn grid_aspect_and_adversarial_pair() {
        let spec = EpsilonNetSpec::new(8, 32, 0.0);
        let pts = generate_epsilon_net(&spec, 1).unwrap();
        assert_eq!(pts.len(), 64);
        let check = check_well_spaced(&pts, 8, 0.75).unwrap();
        assert!(check.ok);
        // interior cells are squares of side 32 around each site
        let interior = brute_voronoi(&pts, &Point::new2(112, 112), 8).unwrap();
        assert_eq!(interior.aspect2(), BigRational::new(1.into(), 2.into()));

        let pair = [Point::new2(1, 1), Point::new2(2, 1)];
        let check = check_well_spaced(&pair, 20, 2.0).unwrap();
        assert!(!check.ok && check.max_aspect > 1000.0);
    }

    #[test]
    fn generator_is_deterministic_and_within_bound() {
        let spec = EpsilonNetSpec::new(10, 80, 0.5);
        let a = generate_epsilon_net(&spec, 7).unwrap();
        assert_eq!(a, generate_epsilon_net(&spec, 7).unwrap());
        assert_ne!(a, generate_epsilon_net(&spec, 8).unwrap());
        let check = check_well_spaced(&a, 10, spec.advertised_rho()).unwrap();
        assert!(check.ok, "{} > {}", check.max_aspect, spec.advertised_rho());
        assert!(generate_epsilon_net(&EpsilonNetSpec::new(10, 80, 1.5), 0).is_err());
    }

    fn arb_set(w: u32, max_n: usize) -> impl Strategy<Value = Vec<Point>> {
        proptest::collection::hash_set((0..1u32 << w, 0..1u32 << w), 2..max_n)
            .prop_map(|s| s.into_iter().map(|(x, y)| Point::new2(x, y)).collect())
    }

    proptest! {
        #[test]
        fn leaf_heights_match_square_of(pts in arb_set(7, 40)) {
            let c = cfg(7);
            let tree = build_explicit_quadtree(&pts, &c, false);
            let src = SortedPoints::new(c, &pts).unwrap();
            for p in &pts {
                prop_assert_eq!(tree.leaf_height(p), square_of(p, &src).unwrap().height);
            }
        }

        #[test]
        fn cells_tile_the_domain(pts in arb_set(6, 25)) {
            let mut area = Q::zero();
            for p in &pts {
                area += polygon_area(&brute_voronoi(&pts, p, 6).unwrap().polygon);
            }
            prop_assert_eq!(area, qi(63 * 63));
        }

        #[test]
        fn integer_path_matches_rational(pts in arb_set(4, 14)) {
            for p in &pts {
                let mut others: Vec<Point> = pts.iter().copied().filter(|q| q != p).collect();
                others.sort_by(|a, b| a.dist2(p).cmp(&b.dist2(p)).then(morton_cmp(a, b)));
                let (poly, nb) = integer_cell(p, &others, 4, false).unwrap();
                let slow = rational_cell(p, &others, 4, false).unwrap();
                prop_assert_eq!(canonical_polygon(&poly), canonical_polygon(&slow.polygon));
                prop_assert_eq!(nb, slow.neighbors);
            }
        }

        #[test]
        fn pruning_keeps_cells(pts in arb_set(8, 30)) {
            for p in &pts {
                let a = brute_voronoi(&pts, p, 8).unwrap();
                let b = brute_voronoi_pruned(&pts, p, 8).unwrap();
                prop_assert_eq!(canonical_polygon(&a.polygon), canonical_polygon(&b.polygon));
                prop_assert_eq!(a.neighbors, b.neighbors);
            }
        }

        #[test]
        fn generated_nets_pass_checker(seed in any::<u64>(), eps in 0.0f64..0.9) {
            let spec = EpsilonNetSpec::new(9, 64, eps);
            let pts = generate_epsilon_net(&spec, seed).unwrap();
            let check = check_well_spaced(&pts, 9, spec.advertised_rho()).unwrap();
            prop_assert!(check.ok, "{} > {}", check.max_aspect, spec.advertised_rho());
        }
    }
}
