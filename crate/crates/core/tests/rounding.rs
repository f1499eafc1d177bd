use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pqc::geom::{round_set, HeightedPoint};
use pqc::morton::{morton_cmp, Config, Point};
use pqc::oracle::{build_explicit_quadtree, generate_epsilon_net, EpsilonNetSpec};

/// Points whose leaf height over the rounded set differs from the stored one.
fn height_changes(rounded: &[HeightedPoint], cfg: &Config) -> Vec<(Point, u32, u32)> {
    let pts: Vec<Point> = rounded.iter().map(|hp| hp.point).collect();
    let tree = build_explicit_quadtree(&pts, cfg, false);
    rounded
        .iter()
        .filter_map(|hp| {
            let again = tree.leaf_height(&hp.point);
            (again != hp.height).then_some((hp.point, hp.height, again))
        })
        .collect()
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, w: u32) -> Vec<Point> {
    let mut pts: Vec<Point> = (0..n)
        .map(|_| Point::new2(rng.gen_range(0..1 << w), rng.gen_range(0..1 << w)))
        .collect();
    pts.sort_by(morton_cmp);
    pts.dedup();
    pts
}

#[test]
fn rounding_keeps_the_tree_on_nets() {
    let w = 16;
    for gamma in 2..=5 {
        let cfg = Config::new(2, w, gamma).unwrap();
        for seed in 0..4 {
            let pts = generate_epsilon_net(&EpsilonNetSpec::new(w, 1 << 11, 0.5), seed).unwrap();
            let rounded = round_set(&pts, &cfg).unwrap();
            let changed = height_changes(&rounded, &cfg);
            assert!(changed.is_empty(), "γ={gamma} seed={seed}: {changed:?}");
        }
    }
}

#[test]
fn rounding_keeps_the_tree_on_arbitrary_sets() {
    let w = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for gamma in 2..=5 {
        let cfg = Config::new(2, w, gamma).unwrap();
        let (mut sets, mut bad_sets, mut bad_points, mut total) = (0, 0, 0, 0);
        for _ in 0..100 {
            let pts = random_set(&mut rng, 60, w);
            let rounded = round_set(&pts, &cfg).unwrap();
            let changed = height_changes(&rounded, &cfg);
            sets += 1;
            total += pts.len();
            if !changed.is_empty() {
                bad_sets += 1;
                bad_points += changed.len();
                if bad_sets == 1 {
                    println!("γ={gamma} first counterexample: {:?}", changed[0]);
                }
            }
        }
        println!("γ={gamma}: {bad_sets}/{sets} sets, {bad_points}/{total} points changed height");
        assert_eq!(bad_sets, 0);
    }
}

#[test]
fn rounding_preserves_morton_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for gamma in 0..=4 {
        let cfg = Config::new(2, 10, gamma).unwrap();
        for _ in 0..100 {
            let pts = random_set(&mut rng, 80, 10);
            let rounded = round_set(&pts, &cfg).unwrap();
            let tree = build_explicit_quadtree(&pts, &cfg, false);
            let by_rank: Vec<Point> = pts
                .iter()
                .map(|p| pqc::geom::round_point(p, tree.leaf_height(p), gamma))
                .collect();
            let stored: Vec<Point> = rounded.iter().map(|hp| hp.point).collect();
            assert_eq!(stored, by_rank, "γ={gamma}");
        }
    }
}
