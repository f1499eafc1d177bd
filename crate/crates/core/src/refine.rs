//! Quality refinement over the compressed store.
//!
//! Rounds sweep the vertices in Morton order with a square-size threshold `r`
//! starting at zero. A vertex whose leaf square is larger than `r` is deferred
//! and lowers the next threshold candidate. Every other vertex has Steiner
//! points inserted until its `2ρ`-clipped cell has aspect ratio at most `ρ`;
//! any insertion keeps the threshold for another round. The sweep stops when
//! a round neither defers nor inserts.
//!
//! A Steiner point is a far vertex of the clipped cell, snapped to the grid
//! toward the site and then rounded to the lattice a point at the site's leaf
//! height would keep.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{
    clipped_voronoi, exact_f64, rounding_shift, ClippedVoronoiCell, HeightedPoint, QPoint,
};
use crate::morton::{interleave, morton_cmp, Point};
use crate::qtree::{nearest_neighbour, square_of, PointSource};
use crate::store::{CompressedStore, Mode};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RefineParams {
    pub rho: f64,
    pub gamma: u32,
    pub max_rounds: usize,
    /// Insertions allowed for one vertex visit before it is reported stuck.
    pub max_insertions_per_visit: usize,
}

impl RefineParams {
    pub const DEFAULT_MAX_ROUNDS: usize = 1000;

    pub fn new(rho: f64, gamma: u32) -> Self {
        RefineParams {
            rho,
            gamma,
            max_rounds: Self::DEFAULT_MAX_ROUNDS,
            max_insertions_per_visit: 64,
        }
    }

    /// `ρ - 2^-γ` must be at least one.
    pub fn validate(&self) -> Result<()> {
        if !self.rho.is_finite() {
            return Err(Error::Config(format!(
                "rho must be finite, got {}",
                self.rho
            )));
        }
        let slack = self.slack_factor();
        if slack < BigRational::from_integer(1.into()) {
            return Err(Error::Config(format!(
                "rho {} is below 1 + 2^-{}; refinement may not terminate",
                self.rho, self.gamma
            )));
        }
        if self.max_rounds == 0 || self.max_insertions_per_visit == 0 {
            return Err(Error::Config(
                "round and insertion caps must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `ρ - 2^-γ`, exactly.
    pub fn slack_factor(&self) -> BigRational {
        let unit = BigRational::new(1.into(), BigInt::from(1) << self.gamma.min(1024) as usize);
        exact_f64(self.rho) - unit
    }
}

/// One Steiner insertion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InsertionEvent {
    pub round: usize,
    pub vertex: [u32; 2],
    pub vertex_height: u32,
    pub vertex_nn2: u128,
    /// Grid point picked in the cell, before lattice rounding.
    pub picked: [u32; 2],
    pub inserted: [u32; 2],
    pub inserted_nn2: u128,
    /// `NN(x')` met `(ρ - 2^-γ)·NN(v)`.
    pub meets_bound: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RoundStats {
    pub round: usize,
    /// Square-side threshold; zero in the first round.
    pub threshold: u64,
    pub processed: usize,
    pub deferred: usize,
    pub inserted: usize,
    pub max_aspect: f64,
    /// Smallest squared NN distance among vertices found with bad aspect.
    pub min_violating_nn2: Option<u128>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RefineReport {
    pub input_count: usize,
    pub output_count: usize,
    pub rounds: usize,
    pub steiner_points: usize,
    /// Largest aspect ratio seen in the final round.
    pub max_aspect: f64,
    pub bpv_before: f64,
    pub bpv_after: f64,
    /// Insertions whose rounded point missed the nearest-neighbour bound.
    pub bound_violations: usize,
    /// Vertex visits abandoned with bad aspect.
    pub stuck_visits: usize,
    pub round_stats: Vec<RoundStats>,
    pub insertions: Vec<InsertionEvent>,
}

impl RefineReport {
    /// `key=value` lines for the command line.
    pub fn to_kv(&self) -> String {
        format!(
            "input_count={}\noutput_count={}\nrounds={}\nsteiner_points={}\nmax_aspect={:.6}\nbpv_before={:.3}\nbpv_after={:.3}\nbound_violations={}\nstuck_visits={}\n",
            self.input_count,
            self.output_count,
            self.rounds,
            self.steiner_points,
            self.max_aspect,
            self.bpv_before,
            self.bpv_after,
            self.bound_violations,
            self.stuck_visits
        )
    }
}

fn bpv(store: &CompressedStore) -> f64 {
    if store.is_empty() {
        0.0
    } else {
        store.payload_bits() as f64 / store.len() as f64
    }
}

/// Integer coordinate of rational `x`, moved toward `toward`.
fn snap_toward(x: &BigRational, toward: u32) -> i64 {
    let t = BigRational::from_integer(BigInt::from(toward));
    let v = if *x > t { x.floor() } else { x.ceil() };
    v.to_integer().to_i64().unwrap_or(i64::MAX)
}

fn to_grid(c: [i64; 2], max: u32) -> Option<Point> {
    let ok = |v: i64| (0..=i64::from(max)).contains(&v);
    (ok(c[0]) && ok(c[1])).then(|| Point::new2(c[0] as u32, c[1] as u32))
}

/// Far grid points of the clipped cell, best first: for clip-bounded cells the clip-circle point opposite
/// the nearest neighbour, then polygon vertices by decreasing distance (ties
/// by Morton order), pulled onto the clip circle where they overshoot it.
pub fn steiner_candidates(cell: &ClippedVoronoiCell, max_coord: u32) -> Vec<Point> {
    let v = cell.center;
    let (vx, vy) = (f64::from(v.get(0)), f64::from(v.get(1)));
    let radius = cell.clip_radius2.to_f64().unwrap_or(f64::INFINITY).sqrt();
    let mut out: Vec<Point> = Vec::new();
    let push = |p: Option<Point>, out: &mut Vec<Point>| {
        if let Some(p) = p {
            if p != v && !out.contains(&p) {
                out.push(p);
            }
        }
    };
    let toward = |x: f64, c: f64| if x > c { x.floor() } else { x.ceil() };

    if cell.clip_bounded {
        let (nx, ny) = (
            f64::from(cell.nearest.get(0)),
            f64::from(cell.nearest.get(1)),
        );
        let len = ((vx - nx).powi(2) + (vy - ny).powi(2)).sqrt();
        let px = toward(vx + (vx - nx) / len * radius, vx) as i64;
        let py = toward(vy + (vy - ny) / len * radius, vy) as i64;
        if let Some(p) = to_grid([px, py], max_coord) {
            if inside(&cell.polygon, &p) {
                push(Some(p), &mut out);
            }
        }
    }

    let center = crate::geom::qpoint(&v);
    let mut verts: Vec<(BigRational, Point)> = Vec::new();
    for q in &cell.polygon {
        let d2 = qdist2(q, &center);
        let p = if d2 > cell.clip_radius2 {
            let (qx, qy) = (q[0].to_f64().unwrap(), q[1].to_f64().unwrap());
            let len = ((qx - vx).powi(2) + (qy - vy).powi(2)).sqrt();
            to_grid(
                [
                    toward(vx + (qx - vx) / len * radius, vx) as i64,
                    toward(vy + (qy - vy) / len * radius, vy) as i64,
                ],
                max_coord,
            )
        } else {
            to_grid(
                [snap_toward(&q[0], v.get(0)), snap_toward(&q[1], v.get(1))],
                max_coord,
            )
        };
        if let Some(p) = p {
            verts.push((d2, p));
        }
    }
    verts.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| morton_cmp(&a.1, &b.1)));
    for (_, p) in verts {
        push(Some(p), &mut out);
    }
    out
}

fn qdist2(a: &QPoint, b: &QPoint) -> BigRational {
    let dx = &a[0] - &b[0];
    let dy = &a[1] - &b[1];
    &dx * &dx + &dy * &dy
}

/// Closed containment in a counterclockwise convex polygon.
fn inside(poly: &[QPoint], p: &Point) -> bool {
    let q = crate::geom::qpoint(p);
    let n = poly.len();
    if n < 3 {
        return false;
    }
    (0..n).all(|i| {
        let (a, b) = (&poly[i], &poly[(i + 1) % n]);
        let cross = (&b[0] - &a[0]) * (&q[1] - &a[1]) - (&b[1] - &a[1]) * (&q[0] - &a[0]);
        cross >= BigRational::zero()
    })
}

/// The Steiner point for a cell with bad aspect: the first of
/// [`steiner_candidates`], before lattice rounding.
pub fn pick_steiner(cell: &ClippedVoronoiCell, rho: f64) -> Option<Point> {
    let min2 = exact_f64(rho) * exact_f64(rho) * BigRational::from_integer(BigInt::from(cell.nn2));
    let c = cell.center;
    steiner_candidates(cell, u32::MAX)
        .into_iter()
        .find(|p| BigRational::from_integer(BigInt::from(p.dist2(&c))) >= min2)
        .or_else(|| steiner_candidates(cell, u32::MAX).into_iter().next())
}

/// Lattice points of spacing `2^shift` around `x`: the nearest first, then the
/// rest of the enclosing lattice cell by distance.
fn lattice_choices(x: &Point, shift: u32, max: u32) -> Vec<Point> {
    if shift == 0 {
        return vec![*x];
    }
    let step = 1i64 << shift;
    let lo: Vec<i64> = x
        .coords()
        .iter()
        .map(|&c| i64::from(c) & !(step - 1))
        .collect();
    let mut out: Vec<(i64, Point)> = Vec::new();
    for mask in 0..4 {
        let c = [lo[0] + step * (mask & 1), lo[1] + step * ((mask >> 1) & 1)];
        if let Some(p) = to_grid(c, max) {
            let d = (c[0] - i64::from(x.get(0))).pow(2) + (c[1] - i64::from(x.get(1))).pow(2);
            out.push((d, p));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| morton_cmp(&a.1, &b.1)));
    out.into_iter().map(|(_, p)| p).collect()
}

fn contains_point(store: &CompressedStore, p: &Point) -> Result<bool> {
    let rank = store.successor_rank(interleave(p));
    Ok(rank < store.len() && store.point_at(rank)?.point == *p)
}

struct Placement {
    picked: Point,
    inserted: Point,
    nn2: u128,
    meets_bound: bool,
}

fn place_steiner(
    cell: &ClippedVoronoiCell,
    height: u32,
    store: &CompressedStore,
    params: &RefineParams,
) -> Result<Option<Placement>> {
    let cfg = store.config();
    let shift = match store.mode() {
        Mode::Lossless => 0,
        Mode::Lossy => rounding_shift(height, params.gamma),
    };
    let slack = params.slack_factor();
    let need = &slack * &slack * BigRational::from_integer(BigInt::from(cell.nn2));
    let mut best: Option<Placement> = None;
    for picked in steiner_candidates(cell, cfg.max_coord()) {
        for x in lattice_choices(&picked, shift, cfg.max_coord()) {
            if contains_point(store, &x)? {
                continue;
            }
            let nn2 = nearest_neighbour(&x, store)?.map_or(u128::MAX, |(_, d2)| d2);
            let meets_bound = BigRational::from_integer(BigInt::from(nn2)) >= need;
            if meets_bound {
                return Ok(Some(Placement {
                    picked,
                    inserted: x,
                    nn2,
                    meets_bound,
                }));
            }
            if best.as_ref().is_none_or(|b| nn2 > b.nn2) {
                best = Some(Placement {
                    picked,
                    inserted: x,
                    nn2,
                    meets_bound,
                });
            }
        }
    }
    Ok(best)
}

/// Inserts Steiner points until every vertex is `ρ`-well-spaced.
pub fn refine(
    store: &CompressedStore,
    params: &RefineParams,
) -> Result<(CompressedStore, RefineReport)> {
    params.validate()?;
    let cfg = *store.config();
    if cfg.dim != 2 {
        return Err(Error::UnsupportedDimension(cfg.dim));
    }
    if store.mode() == Mode::Lossy && params.gamma != cfg.gamma {
        return Err(Error::Config(format!(
            "refinement gamma {} differs from the store's {}",
            params.gamma, cfg.gamma
        )));
    }
    let mut mesh = store.clone();
    let mut report = RefineReport {
        input_count: store.len(),
        bpv_before: bpv(store),
        ..RefineReport::default()
    };
    if mesh.len() < 2 {
        report.output_count = mesh.len();
        report.bpv_after = report.bpv_before;
        return Ok((mesh, report));
    }
    let beta = 2.0 * params.rho;

    let mut threshold: Option<u64> = Some(0);
    while let Some(r) = threshold {
        if report.rounds == params.max_rounds {
            return Err(Error::NonTermination(params.max_rounds));
        }
        report.rounds += 1;
        let round = report.rounds;
        let mut stats = RoundStats {
            round,
            threshold: r,
            ..RoundStats::default()
        };
        let mut next: Option<u64> = None;
        let snapshot = mesh.clone();
        for hp in snapshot.iter() {
            let v = hp?.point;
            let side = 1u64 << square_of(&v, &mesh)?.height;
            if side > r {
                next = Some(next.map_or(side, |n| n.min(side)));
                stats.deferred += 1;
                continue;
            }
            stats.processed += 1;
            let mut cell = clipped_voronoi(&v, beta, &mesh)?;
            let mut inserted_here = 0;
            while cell.aspect_exceeds(params.rho) {
                next = Some(r);
                stats.min_violating_nn2 = Some(
                    stats
                        .min_violating_nn2
                        .map_or(cell.nn2, |m| m.min(cell.nn2)),
                );
                if inserted_here == params.max_insertions_per_visit {
                    report.stuck_visits += 1;
                    break;
                }
                let height = square_of(&v, &mesh)?.height;
                let Some(place) = place_steiner(&cell, height, &mesh, params)? else {
                    report.stuck_visits += 1;
                    break;
                };
                mesh.insert(HeightedPoint {
                    point: place.inserted,
                    height,
                })?;
                inserted_here += 1;
                stats.inserted += 1;
                if !place.meets_bound {
                    report.bound_violations += 1;
                }
                report.insertions.push(InsertionEvent {
                    round,
                    vertex: [v.get(0), v.get(1)],
                    vertex_height: height,
                    vertex_nn2: cell.nn2,
                    picked: [place.picked.get(0), place.picked.get(1)],
                    inserted: [place.inserted.get(0), place.inserted.get(1)],
                    inserted_nn2: place.nn2,
                    meets_bound: place.meets_bound,
                });
                cell = clipped_voronoi(&v, beta, &mesh)?;
            }
            stats.max_aspect = stats.max_aspect.max(cell.aspect);
        }
        report.max_aspect = stats.max_aspect;
        report.round_stats.push(stats);
        threshold = next;
    }
    report.output_count = mesh.len();
    report.steiner_points = mesh.len() - store.len();
    report.bpv_after = bpv(&mesh);
    Ok((mesh, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morton::Config;
    use crate::qtree::SortedPoints;

    #[test]
    fn params_validation() {
        assert!(RefineParams::new(1.125, 3).validate().is_ok());
        assert!(RefineParams::new(1.12, 3).validate().is_err());
        assert!(RefineParams::new(2.0, 0).validate().is_ok());
        assert!(RefineParams::new(1.9, 0).validate().is_err());
        assert!(RefineParams::new(f64::NAN, 3).validate().is_err());
    }

    #[test]
    fn plus_cell_picks_lowest_corner() {
        let cfg = Config::new(2, 5, 0).unwrap();
        let pts: Vec<Point> = [(8, 8), (0, 8), (16, 8), (8, 0), (8, 16)]
            .iter()
            .map(|&(x, y)| Point::new2(x, y))
            .collect();
        let src = SortedPoints::new(cfg, &pts).unwrap();
        let cell = clipped_voronoi(&Point::new2(8, 8), 1.2, &src).unwrap();
        assert!(cell.aspect_exceeds(0.6));
        assert_eq!(pick_steiner(&cell, 0.6), Some(Point::new2(4, 4)));
    }

    #[test]
    fn lone_neighbour_picks_opposite_point() {
        let cfg = Config::new(2, 12, 0).unwrap();
        let pts = [Point::new2(2000, 2000), Point::new2(2010, 2000)];
        let src = SortedPoints::new(cfg, &pts).unwrap();
        let cell = clipped_voronoi(&pts[0], 4.0, &src).unwrap();
        assert!(cell.clip_bounded);
        assert_eq!(pick_steiner(&cell, 2.0), Some(Point::new2(1960, 2000)));
    }

    #[test]
    fn lattice_choices_nearest_first() {
        let got = lattice_choices(&Point::new2(13, 6), 2, 31);
        assert_eq!(got[0], Point::new2(12, 4));
        assert_eq!(got.len(), 4);
        let edge = lattice_choices(&Point::new2(30, 30), 2, 31);
        assert_eq!(edge, vec![Point::new2(28, 28)]);
    }

    #[test]
    fn well_spaced_grid_is_unchanged() {
        let cfg = Config::new(2, 6, 2).unwrap();
        let pts: Vec<Point> = (0..8)
            .flat_map(|i| (0..8).map(move |j| Point::new2(i * 8 + 4, j * 8 + 4)))
            .collect();
        let store = CompressedStore::from_points(&pts, cfg, Mode::Lossless).unwrap();
        let (out, report) = refine(&store, &RefineParams::new(2.0, 2)).unwrap();
        assert_eq!(report.steiner_points, 0);
        assert_eq!(out.to_vec().unwrap(), store.to_vec().unwrap());
        assert!(report.max_aspect <= 2.0);
    }

    #[test]
    fn two_points_become_well_spaced() {
        let cfg = Config::new(2, 8, 2).unwrap();
        let pts = [Point::new2(100, 100), Point::new2(104, 100)];
        let store = CompressedStore::from_points(&pts, cfg, Mode::Lossy).unwrap();
        let params = RefineParams::new(1.5, 2);
        let (out, report) = refine(&store, &params).unwrap();
        assert!(report.steiner_points > 0);
        assert_eq!(report.stuck_visits, 0);
        for hp in out.iter() {
            let v = hp.unwrap().point;
            let cell = clipped_voronoi(&v, 3.0, &out).unwrap();
            assert!(!cell.aspect_exceeds(1.5), "{v:?} aspect {}", cell.aspect);
        }
        for p in store.iter() {
            let p = p.unwrap().point;
            assert!(contains_point(&out, &p).unwrap());
        }
    }

    #[test]
    fn rejects_three_dimensions_and_gamma_mismatch() {
        let c3 = Config::new(3, 6, 1).unwrap();
        let s3 = CompressedStore::from_points(
            &[Point::new3(1, 2, 3), Point::new3(9, 9, 9)],
            c3,
            Mode::Lossless,
        )
        .unwrap();
        assert!(matches!(
            refine(&s3, &RefineParams::new(2.0, 1)),
            Err(Error::UnsupportedDimension(3))
        ));
        let c2 = Config::new(2, 6, 1).unwrap();
        let s2 =
            CompressedStore::from_points(&[Point::new2(1, 2), Point::new2(9, 9)], c2, Mode::Lossy)
                .unwrap();
        assert!(refine(&s2, &RefineParams::new(2.0, 2)).is_err());
    }
}
