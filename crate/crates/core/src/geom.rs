//! Lossy rounding keyed to leaf heights, and exact 2D clipped Voronoi cells.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::morton::{morton_cmp, Config, Point};
use crate::qtree::{self, PointSource, SortedPoints};

/// A point together with the height of its quadtree leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HeightedPoint {
    pub point: Point,
    pub height: u32,
}

/// Number of low bits rounding clears for a point at leaf height `height`.
#[inline]
pub fn rounding_shift(height: u32, gamma: u32) -> u32 {
    height.saturating_sub(gamma)
}

/// Clears the low `max(h - γ, 0)` bits of every coordinate.
pub fn round_point(p: &Point, height: u32, gamma: u32) -> Point {
    p.clear_low_bits(rounding_shift(height, gamma))
}

/// Computes every point's leaf height over the original set, then rounds.
/// The result is in Morton order.
pub fn round_set(points: &[Point], cfg: &Config) -> Result<Vec<HeightedPoint>> {
    let src = SortedPoints::new(*cfg, points)?;
    let mut out = Vec::with_capacity(points.len());
    for hp in src.points() {
        let s = qtree::square_of(&hp.point, &src)?;
        out.push(HeightedPoint {
            point: round_point(&hp.point, s.height, cfg.gamma),
            height: s.height,
        });
    }
    out.sort_by(|a, b| morton_cmp(&a.point, &b.point));
    for w in out.windows(2) {
        if w[0].point == w[1].point {
            return Err(Error::Duplicate(w[0].point.coords().to_vec()));
        }
    }
    Ok(out)
}

/// Exact rational plane point.
pub type QPoint = [BigRational; 2];

fn q_int(v: i128) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Converts a finite `f64` to the rational it denotes exactly.
pub fn exact_f64(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite value")
}

fn qdist2(a: &QPoint, b: &QPoint) -> BigRational {
    let dx = &a[0] - &b[0];
    let dy = &a[1] - &b[1];
    &dx * &dx + &dy * &dy
}

pub fn qpoint(p: &Point) -> QPoint {
    [q_int(i128::from(p.get(0))), q_int(i128::from(p.get(1)))]
}

pub fn qpoint_f64(q: &QPoint) -> [f64; 2] {
    [
        q[0].to_f64().unwrap_or(f64::NAN),
        q[1].to_f64().unwrap_or(f64::NAN),
    ]
}

/// Closed halfplane `a·x + b·y <= c` of points at least as close to the site
/// as to `other`.
#[derive(Clone, Debug)]
struct Bisector {
    other: Point,
    a: BigRational,
    b: BigRational,
    c: BigRational,
}

impl Bisector {
    fn new(site: &Point, other: &Point) -> Self {
        let (sx, sy) = (i128::from(site.get(0)), i128::from(site.get(1)));
        let (ox, oy) = (i128::from(other.get(0)), i128::from(other.get(1)));
        // 2(o - s)·x <= |o|² - |s|²
        Bisector {
            other: *other,
            a: q_int(2 * (ox - sx)),
            b: q_int(2 * (oy - sy)),
            c: q_int(ox * ox + oy * oy - sx * sx - sy * sy),
        }
    }

    fn slack(&self, x: &QPoint) -> BigRational {
        &self.a * &x[0] + &self.b * &x[1] - &self.c
    }
}

// Sutherland–Hodgman against one halfplane; exact.
fn clip(poly: &[QPoint], h: &Bisector) -> Vec<QPoint> {
    let n = poly.len();
    let slacks: Vec<BigRational> = poly.iter().map(|p| h.slack(p)).collect();
    if slacks.iter().all(|s| !s.is_positive()) {
        return poly.to_vec();
    }
    let mut out: Vec<QPoint> = Vec::with_capacity(n + 1);
    for i in 0..n {
        let j = (i + 1) % n;
        let (p, q) = (&poly[i], &poly[j]);
        let (sp, sq) = (&slacks[i], &slacks[j]);
        if !sp.is_positive() {
            out.push(p.clone());
        }
        if (sp.is_positive() && sq.is_negative()) || (sp.is_negative() && sq.is_positive()) {
            let t = sp / (sp - sq);
            out.push([&p[0] + (&q[0] - &p[0]) * &t, &p[1] + (&q[1] - &p[1]) * &t]);
        }
    }
    out.dedup();
    while out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

fn rational_clip(v: &Point, cands: &[Point], bounds: [i128; 4]) -> (Vec<QPoint>, Vec<Point>) {
    let [x0, y0, x1, y1] = bounds;
    let center = qpoint(v);
    let mut polygon: Vec<QPoint> = vec![
        [q_int(x0), q_int(y0)],
        [q_int(x1), q_int(y0)],
        [q_int(x1), q_int(y1)],
        [q_int(x0), q_int(y1)],
    ];
    polygon.dedup();

    let mut used: Vec<Bisector> = Vec::new();
    for q in cands {
        let reach = polygon.iter().map(|x| qdist2(x, &center)).max().unwrap();
        // every vertex within |vq|/2 means the bisector cannot cut
        if reach * q_int(4) <= q_int(q.dist2(v) as i128) {
            break;
        }
        let bis = Bisector::new(v, q);
        polygon = clip(&polygon, &bis);
        used.push(bis);
    }

    let mut neighbors = Vec::new();
    let n = polygon.len();
    if n >= 2 {
        for i in 0..n {
            let (a, b) = (&polygon[i], &polygon[(i + 1) % n]);
            if let Some(bis) = used
                .iter()
                .find(|bis| bis.slack(a).is_zero() && bis.slack(b).is_zero())
            {
                if !neighbors.contains(&bis.other) {
                    neighbors.push(bis.other);
                }
            }
        }
    }
    neighbors.sort_by(morton_cmp);

    (polygon, neighbors)
}

/// Homogeneous point `(X/W, Y/W)`, `W > 0`, and the line of its outgoing
/// edge.
#[derive(Clone, Copy, Debug)]
struct HVertex {
    x: i128,
    y: i128,
    w: i128,
    out: usize,
}

/// Line `a·x + b·y = c`; the kept side is `<=`.
#[derive(Clone, Copy, Debug)]
struct Line {
    a: i128,
    b: i128,
    c: i128,
    other: Option<Point>,
}

impl Line {
    fn side(&self, p: &HVertex) -> Option<i128> {
        let t = self
            .a
            .checked_mul(p.x)?
            .checked_add(self.b.checked_mul(p.y)?)?;
        Some(t.checked_sub(self.c.checked_mul(p.w)?)?.signum())
    }

    fn meet(&self, o: &Line, out: usize) -> Option<HVertex> {
        let w = self
            .a
            .checked_mul(o.b)?
            .checked_sub(o.a.checked_mul(self.b)?)?;
        let x = self
            .c
            .checked_mul(o.b)?
            .checked_sub(o.c.checked_mul(self.b)?)?;
        let y = self
            .a
            .checked_mul(o.c)?
            .checked_sub(o.a.checked_mul(self.c)?)?;
        let s = w.signum();
        (s != 0).then(|| HVertex {
            x: x * s,
            y: y * s,
            w: w * s,
            out,
        })
    }
}

fn same_place(p: &HVertex, q: &HVertex) -> Option<bool> {
    Some(
        p.x.checked_mul(q.w)? == q.x.checked_mul(p.w)?
            && p.y.checked_mul(q.w)? == q.y.checked_mul(p.w)?,
    )
}

/// Every vertex within `sqrt(d2) / 2` of `v`.
fn within_half(poly: &[HVertex], v: &Point, d2: u128) -> Option<bool> {
    let d2 = i128::try_from(d2).ok()?;
    let (vx, vy) = (i128::from(v.get(0)), i128::from(v.get(1)));
    for p in poly {
        let dx = p.x.checked_sub(vx.checked_mul(p.w)?)?;
        let dy = p.y.checked_sub(vy.checked_mul(p.w)?)?;
        let r = dx.checked_mul(dx)?.checked_add(dy.checked_mul(dy)?)?;
        if r.checked_mul(4)? > d2.checked_mul(p.w.checked_mul(p.w)?)? {
            return Some(false);
        }
    }
    Some(true)
}

/// Sutherland–Hodgman in homogeneous integer coordinates. `None` on overflow
/// or a degenerate box.
fn integer_clip(
    v: &Point,
    cands: &[Point],
    bounds: [i128; 4],
) -> Option<(Vec<QPoint>, Vec<Point>)> {
    let [x0, y0, x1, y1] = bounds;
    if x0 >= x1 || y0 >= y1 {
        return None;
    }
    let edge = |a, b, c| Line {
        a,
        b,
        c,
        other: None,
    };
    let mut lines = vec![
        edge(0, -1, -y0),
        edge(1, 0, x1),
        edge(0, 1, y1),
        edge(-1, 0, -x0),
    ];
    let corner = |x, y, out| HVertex { x, y, w: 1, out };
    let mut poly = vec![
        corner(x0, y0, 0),
        corner(x1, y0, 1),
        corner(x1, y1, 2),
        corner(x0, y1, 3),
    ];
    let (vx, vy) = (i128::from(v.get(0)), i128::from(v.get(1)));
    for q in cands {
        if within_half(&poly, v, q.dist2(v))? {
            break;
        }
        let (qx, qy) = (i128::from(q.get(0)), i128::from(q.get(1)));
        let cut = Line {
            a: 2 * (qx - vx),
            b: 2 * (qy - vy),
            c: qx * qx + qy * qy - vx * vx - vy * vy,
            other: Some(*q),
        };
        let sides: Vec<i128> = poly.iter().map(|p| cut.side(p)).collect::<Option<_>>()?;
        let n = poly.len();
        let lies_on = |i: usize| sides[i] == 0 && sides[(i + 1) % n] == 0;
        if sides.iter().all(|&s| s <= 0) && !(0..n).any(lies_on) {
            continue;
        }
        let id = lines.len();
        lines.push(cut);
        let mut next = Vec::with_capacity(n + 1);
        for i in 0..n {
            let (cur, s, t) = (poly[i], sides[i], sides[(i + 1) % n]);
            let along = lines[cur.out];
            if s <= 0 {
                // an edge lying on the bisector belongs to it
                next.push(HVertex {
                    out: if s == 0 && t >= 0 { id } else { cur.out },
                    ..cur
                });
            }
            if s < 0 && t > 0 {
                next.push(along.meet(&cut, id)?);
            } else if s > 0 && t < 0 {
                next.push(cut.meet(&along, cur.out)?);
            }
        }
        poly = next;
    }
    let mut verts: Vec<HVertex> = Vec::with_capacity(poly.len());
    for p in poly {
        match verts.last() {
            Some(last) if same_place(last, &p)? => {
                let len = verts.len();
                verts[len - 1].out = p.out;
            }
            _ => verts.push(p),
        }
    }
    while verts.len() > 1 && same_place(&verts[0], verts.last()?)? {
        verts.pop();
    }
    let mut neighbors: Vec<Point> = Vec::new();
    if verts.len() >= 2 {
        for p in &verts {
            if let Some(o) = lines[p.out].other {
                if !neighbors.contains(&o) {
                    neighbors.push(o);
                }
            }
        }
    }
    neighbors.sort_by(morton_cmp);
    let polygon = verts
        .iter()
        .map(|p| {
            let w = BigInt::from(p.w);
            [
                BigRational::new(BigInt::from(p.x), w.clone()),
                BigRational::new(BigInt::from(p.y), w),
            ]
        })
        .collect();
    Some((polygon, neighbors))
}

/// A site's Voronoi cell intersected with the domain box and with the ball of
/// radius `β·NN(v)`.
#[derive(Clone, Debug)]
pub struct ClippedVoronoiCell {
    pub center: Point,
    pub nearest: Point,
    /// Squared nearest-neighbour distance, exact.
    pub nn2: u128,
    pub nn: f64,
    pub beta: f64,
    /// Points whose bisectors contribute an edge of positive length.
    pub neighbors: Vec<Point>,
    /// Convex polygon, counterclockwise. Bounded by the square circumscribing
    /// the clip circle where the clip binds.
    pub polygon: Vec<QPoint>,
    /// Some polygon vertex reaches the clip circle.
    pub clip_bounded: bool,
    /// `(β·NN)²`, exact.
    pub clip_radius2: BigRational,
    /// Squared aspect ratio, with distances clamped to the clip radius.
    pub aspect2: BigRational,
    pub aspect: f64,
    /// Trie squares range-searched to build the cell.
    pub squares_scanned: usize,
}

impl ClippedVoronoiCell {
    /// Exact `aspect > rho`.
    pub fn aspect_exceeds(&self, rho: f64) -> bool {
        let r = exact_f64(rho);
        self.aspect2 > &r * &r
    }

    pub fn polygon_f64(&self) -> Vec<[f64; 2]> {
        self.polygon.iter().map(qpoint_f64).collect()
    }

    /// Squared distance from the center to the farthest polygon vertex,
    /// unclamped.
    pub fn max_vertex_dist2(&self) -> BigRational {
        let c = qpoint(&self.center);
        self.polygon
            .iter()
            .map(|v| qdist2(v, &c))
            .max()
            .unwrap_or_else(BigRational::zero)
    }
}

/// Aspect ratio recomputed from the polygon: farthest vertex (clamped to the
/// clip radius) over the nearest-neighbour distance.
pub fn aspect_ratio(cell: &ClippedVoronoiCell) -> f64 {
    let far = cell.max_vertex_dist2().min(cell.clip_radius2.clone());
    (far / BigRational::from_integer(BigInt::from(cell.nn2)))
        .to_f64()
        .unwrap_or(f64::INFINITY)
        .sqrt()
}

/// Builds the `β`-clipped Voronoi cell of `v` (2D only).
///
/// Only points within three box half-widths are gathered; a farther point's
/// bisector cannot reach the box corners.
pub fn clipped_voronoi<S: PointSource + ?Sized>(
    v: &Point,
    beta: f64,
    src: &S,
) -> Result<ClippedVoronoiCell> {
    let cfg = src.config();
    if cfg.dim != 2 {
        return Err(Error::UnsupportedDimension(cfg.dim));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Config(format!(
            "clip factor must be positive, got {beta}"
        )));
    }
    cfg.check_point(v)?;
    let (nn, mut squares) = qtree::nearest_neighbour_counted(v, src)?;
    let (nearest, nn2) = nn.ok_or(Error::TooFewPoints)?;

    let beta_q = exact_f64(beta);
    let nn2_q = BigRational::from_integer(BigInt::from(nn2));
    let clip_radius2 = &beta_q * &beta_q * &nn2_q;

    // integer half-width of a box enclosing the clip circle
    let mut half = (beta * (nn2 as f64).sqrt()).ceil() as u64 + 1;
    while q_int(i128::from(half) * i128::from(half)) < clip_radius2 {
        half += 1;
    }

    let (mut cands, scanned) = qtree::gather_within(v, half.saturating_mul(3), src)?;
    squares += scanned;
    cands.sort_by(|a, b| a.dist2(v).cmp(&b.dist2(v)).then(morton_cmp(a, b)));

    let max = i128::from(cfg.max_coord());
    let (vx, vy) = (i128::from(v.get(0)), i128::from(v.get(1)));
    let h = i128::from(half);
    let (x0, x1) = ((vx - h).max(0), (vx + h).min(max));
    let (y0, y1) = ((vy - h).max(0), (vy + h).min(max));
    let center = qpoint(v);
    let (polygon, neighbors) = match integer_clip(v, &cands, [x0, y0, x1, y1]) {
        Some(cell) => cell,
        None => rational_clip(v, &cands, [x0, y0, x1, y1]),
    };

    let far = polygon
        .iter()
        .map(|x| qdist2(x, &center))
        .max()
        .unwrap_or_else(BigRational::zero);
    let clip_bounded = far >= clip_radius2;
    let clamped = if clip_bounded {
        clip_radius2.clone()
    } else {
        far
    };
    let aspect2 = clamped / &nn2_q;
    let aspect = aspect2.to_f64().unwrap_or(f64::INFINITY).sqrt();

    Ok(ClippedVoronoiCell {
        center: *v,
        nearest,
        nn2,
        nn: (nn2 as f64).sqrt(),
        beta,
        neighbors,
        polygon,
        clip_bounded,
        clip_radius2,
        aspect2,
        aspect,
        squares_scanned: squares,
    })
}
