use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pqc::error::Error;
use pqc::morton::{Config, Point, TrieSquare};
use pqc::oracle::{generate_epsilon_net, EpsilonNetSpec};
use pqc::qtree::{square_of, vertices, PointSource};
use pqc::store::{CompressedStore, Mode};

fn net(w: u32, cells: u32, seed: u64) -> Vec<Point> {
    generate_epsilon_net(&EpsilonNetSpec::new(w, (1 << w) / cells, 0.5), seed).unwrap()
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for (mode, gamma) in [(Mode::Lossless, 0), (Mode::Lossy, 4)] {
        let cfg = Config::new(2, 16, gamma).unwrap();
        let store = CompressedStore::from_points(&net(16, 40, 1), cfg, mode).unwrap();
        let path = dir.path().join("s.pqc");
        store.save(&path).unwrap();
        let back = CompressedStore::load(&path).unwrap();
        assert_eq!(back.to_vec().unwrap(), store.to_vec().unwrap());
        assert_eq!(back.to_bytes(), store.to_bytes());
        assert_eq!(back.mode(), mode);
    }
}

#[test]
fn corrupted_bytes_are_rejected_without_panicking() {
    let cfg = Config::new(2, 12, 3).unwrap();
    let store = CompressedStore::from_points(&net(12, 20, 2), cfg, Mode::Lossy).unwrap();
    let bytes = store.to_bytes();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rejected = 0;
    for _ in 0..500 {
        let mut bad = bytes.clone();
        let i = rng.gen_range(0..bad.len());
        bad[i] ^= 1 << rng.gen_range(0..8);
        match CompressedStore::from_bytes(&bad, None) {
            Err(_) => rejected += 1,
            // a flip inside a coordinate can still decode to a valid store
            Ok(s) => assert_eq!(s.len(), store.len()),
        }
    }
    assert!(rejected > 100);
    for cut in [0, 3, 9, bytes.len() - 1] {
        assert!(CompressedStore::from_bytes(&bytes[..cut], None).is_err());
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(
        CompressedStore::from_bytes(&extra, None),
        Err(Error::CorruptFile(_))
    ));
}

#[test]
fn queries_touch_few_blocks() {
    let w = 20;
    let cfg = Config::new(2, w, 5).unwrap();
    let pts = net(w, 100, 4);
    let store = CompressedStore::from_points(&pts, cfg, Mode::Lossy).unwrap();
    let stored = store.to_vec().unwrap();
    let mut worst_square = 0;
    for hp in stored.iter().step_by(97) {
        store.reset_counters();
        square_of(&hp.point, &store).unwrap();
        worst_square = worst_square.max(store.counters().blocks_decoded);
    }
    // independent of n: a constant number of squares, each hitting O(1) blocks
    assert!(
        worst_square <= 40,
        "square_of decoded {worst_square} blocks"
    );

    store.reset_counters();
    let all = vertices(&cfg.root(), &store);
    assert_eq!(all.len(), pts.len());
    assert!(store.counters().blocks_decoded <= 2);
}

#[test]
fn rank_access_and_square_ranges() {
    let cfg = Config::new(3, 10, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pts: Vec<Point> = (0..500)
        .map(|_| {
            Point::new3(
                rng.gen_range(0..1024),
                rng.gen_range(0..1024),
                rng.gen_range(0..1024),
            )
        })
        .collect();
    pts.sort_by(pqc::morton::morton_cmp);
    pts.dedup();
    let store = CompressedStore::from_points(&pts, cfg, Mode::Lossless).unwrap();
    for (rank, p) in pts.iter().enumerate() {
        assert_eq!(store.point_at(rank).unwrap().point, *p);
    }
    assert!(matches!(
        store.point_at(pts.len()),
        Err(Error::RankOutOfBounds { .. })
    ));
    for h in [0, 3, 7, 10] {
        let p = pts[rng.gen_range(0..pts.len())];
        let s = TrieSquare::containing(&p, h);
        let r = vertices(&s, &store);
        let want: Vec<&Point> = pts.iter().filter(|q| s.contains(q)).collect();
        assert_eq!(r.len(), want.len());
        assert!(r.lo <= pts.iter().position(|q| *q == p).unwrap());
    }
    let s = square_of(&pts[0], &store).unwrap();
    assert!(s.contains(&pts[0]));
}

#[test]
fn lossy_store_rejects_unrounded_insert() {
    let cfg = Config::new(2, 8, 1).unwrap();
    let mut store = CompressedStore::empty(cfg, Mode::Lossy);
    let bad = pqc::geom::HeightedPoint {
        point: Point::new2(5, 5),
        height: 4,
    };
    assert!(store.insert(bad).is_err());
    let ok = pqc::geom::HeightedPoint {
        point: Point::new2(8, 8),
        height: 4,
    };
    store.insert(ok).unwrap();
    assert_eq!(store.len(), 1);
}
