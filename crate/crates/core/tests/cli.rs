use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use pqc::morton::{Config, Point};
use pqc::oracle::build_explicit_quadtree;

fn pqc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pqc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("run pqc")
}

fn kv(out: &Output) -> BTreeMap<String, String> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const FIGURE: &str = "5 2\n6 3\n8 4\n9 6\n10 6\n";

#[test]
fn compress_figure_reports_41_payload_bits() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "fig.txt", FIGURE);
    let out = pqc(
        &["compress", "fig.txt", "--width", "5", "--lossless"],
        dir.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m = kv(&out);
    assert_eq!(m["payload_bits"], "41");
    assert_eq!(m["n"], "5");
    assert_eq!(m["passes"], "1");

    let stats = kv(&pqc(&["stats", "fig.pqc"], dir.path()));
    assert_eq!(stats["n"], "5");
    assert_eq!(stats["blocks"], "1");
    assert_eq!(stats["payload_bits"], "41");
    assert_eq!(stats["block_histogram"], "5:1");
    let file_bits: usize = stats["file_bits"].parse().unwrap();
    assert_eq!(
        file_bits,
        8 * std::fs::metadata(dir.path().join("fig.pqc")).unwrap().len() as usize
    );
    assert_eq!(
        stats["bpv"],
        format!("{}", (file_bits as f64 / 5.0 * 1000.0).round() / 1000.0)
    );
    assert_eq!(stats["payload_bpv"], "8.2");
}

#[test]
fn empty_input_gives_valid_store() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "empty.txt", "");
    for extra in [&["--lossless"][..], &["--gamma", "3"][..]] {
        let mut args = vec!["compress", "empty.txt", "--width", "8"];
        args.extend_from_slice(extra);
        let out = pqc(&args, dir.path());
        assert_eq!(out.status.code(), Some(0));
        assert_eq!(kv(&out)["n"], "0");
        let stats = kv(&pqc(&["stats", "empty.pqc"], dir.path()));
        assert_eq!(stats["n"], "0");
        assert_eq!(stats["blocks"], "0");
    }
}

#[test]
fn decompress_inverts_lossless_compress() {
    let dir = tempfile::tempdir().unwrap();
    // Morton-ordered input with irregular spacing
    write(
        dir.path(),
        "in.txt",
        "# a comment\n5   2\n 6 3\n\n8 4\n9\t6\n10 6\n",
    );
    pqc(
        &[
            "compress",
            "in.txt",
            "--width",
            "5",
            "--lossless",
            "-o",
            "s.pqc",
        ],
        dir.path(),
    );
    let out = pqc(&["decompress", "s.pqc"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body.join("\n") + "\n", FIGURE);
    assert!(text.starts_with("# pqc d=2 w=5\n"));

    std::fs::write(dir.path().join("again.txt"), &text).unwrap();
    pqc(
        &["compress", "again.txt", "--lossless", "-o", "again.pqc"],
        dir.path(),
    );
    assert_eq!(
        std::fs::read(dir.path().join("s.pqc")).unwrap(),
        std::fs::read(dir.path().join("again.pqc")).unwrap()
    );
}

#[test]
fn header_sets_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "h.txt", "# pqc d=3 w=6\n1 2 3\n40 50 60\n");
    let out = pqc(&["compress", "h.txt", "--lossless"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let m = kv(&out);
    assert_eq!((m["dim"].as_str(), m["width"].as_str()), ("3", "6"));
    let out = pqc(
        &["compress", "h.txt", "--lossless", "--width", "5"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "60 does not fit in 5 bits");
}

#[test]
fn scaled_real_input() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "r.txt", "0.5 0.25\n1.75 3.0\n");
    let out = pqc(
        &[
            "compress",
            "r.txt",
            "--width",
            "8",
            "--scale",
            "10",
            "--lossless",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(pqc(&["decompress", "r.pqc"], dir.path()).stdout).unwrap();
    assert!(text.contains("5 2\n") && text.contains("17 30\n"), "{text}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.txt", "1 x\n");
    write(dir.path(), "wide.txt", "1 999\n");
    write(dir.path(), "dup.txt", "1 1\n1 1\n");
    let code = |args: &[&str]| pqc(args, dir.path()).status.code();
    assert_eq!(code(&["compress", "bad.txt", "--width", "8"]), Some(1));
    assert_eq!(
        code(&["compress", "dup.txt", "--width", "8", "--lossless"]),
        Some(1)
    );
    assert_eq!(code(&["compress", "wide.txt", "--width", "8"]), Some(3));
    assert_eq!(code(&["compress", "missing.txt", "--width", "8"]), Some(2));
    assert_eq!(code(&["stats", "missing.pqc"]), Some(2));
    assert_eq!(
        code(&["compress", "bad.txt", "--lossless", "--gamma", "2"]),
        Some(1)
    );
    assert_eq!(code(&["frobnicate"]), Some(1));
    assert_eq!(code(&["--help"]), Some(0));
    write(dir.path(), "junk.pqc", "PQC1 is not enough");
    assert_eq!(code(&["stats", "junk.pqc"]), Some(1));
}

#[test]
fn queries_match_oracles() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "plus.txt", "8 8\n0 8\n16 8\n8 0\n8 16\n");
    pqc(
        &["compress", "plus.txt", "--width", "5", "--lossless"],
        dir.path(),
    );

    let out = pqc(&["query", "plus.pqc", "voronoi", "8", "8"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m = kv(&out);
    assert_eq!(m["neighbor_count"], "4");
    assert_eq!(m["nn2"], "64");
    assert!(m.contains_key("blocks_decoded") && m.contains_key("searches"));

    let m = kv(&pqc(&["query", "plus.pqc", "vertices"], dir.path()));
    assert_eq!(m["count"], "5");

    let pts = [(8, 8), (0, 8), (16, 8), (8, 0), (8, 16)].map(|(x, y)| Point::new2(x, y));
    let tree = build_explicit_quadtree(&pts, &Config::new(2, 5, 0).unwrap(), false);
    for p in &pts {
        let (x, y) = (p.get(0).to_string(), p.get(1).to_string());
        let m = kv(&pqc(
            &["query", "plus.pqc", "square-of", &x, &y],
            dir.path(),
        ));
        let leaf = tree.leaf_of(p).square;
        assert_eq!(
            m["corner"],
            format!("{},{}", leaf.corner.get(0), leaf.corner.get(1))
        );
        assert_eq!(m["height"], leaf.height.to_string());
    }

    let m = kv(&pqc(
        &["query", "plus.pqc", "vertices", "0", "0", "--height", "4"],
        dir.path(),
    ));
    assert_eq!((m["lo"].as_str(), m["hi"].as_str()), ("0", "3"));
    let code = pqc(&["query", "plus.pqc", "square-of", "99", "1"], dir.path())
        .status
        .code();
    assert_eq!(code, Some(3));
    let code = pqc(&["query", "plus.pqc", "square-of", "1"], dir.path())
        .status
        .code();
    assert_eq!(code, Some(1));
}

#[test]
fn gen_is_deterministic_and_feeds_compress() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gen", "--width", "12", "--f0", "128", "--seed", "9"];
    let a = pqc(&args, dir.path()).stdout;
    let b = pqc(&args, dir.path()).stdout;
    assert_eq!(a, b);
    assert_ne!(
        a,
        pqc(
            &["gen", "--width", "12", "--f0", "128", "--seed", "10"],
            dir.path()
        )
        .stdout
    );
    std::fs::write(dir.path().join("net.txt"), &a).unwrap();

    let m = kv(&pqc(&["compress", "net.txt", "--gamma", "4"], dir.path()));
    assert_eq!(m["n"], "1024");
    assert_eq!(m["passes"], "12");
    let m = kv(&pqc(
        &[
            "compress",
            "net.txt",
            "--gamma",
            "4",
            "--bits-per-scan",
            "3",
            "-o",
            "fast.pqc",
        ],
        dir.path(),
    ));
    assert_eq!(m["passes"], "4");
    assert_eq!(
        std::fs::read(dir.path().join("net.pqc")).unwrap(),
        std::fs::read(dir.path().join("fast.pqc")).unwrap()
    );
}

#[test]
fn refine_and_json() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "pair.txt", "100 100\n104 100\n900 900\n");
    pqc(
        &["compress", "pair.txt", "--width", "10", "--gamma", "4"],
        dir.path(),
    );
    let out = pqc(&["refine", "pair.pqc", "--rho", "2", "--json"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["steiner_points"].as_u64().unwrap() > 0);
    assert!(v["max_aspect"].as_f64().unwrap() <= 2.0);
    let m = kv(&pqc(&["stats", "pair.refined.pqc"], dir.path()));
    assert_eq!(m["n"], v["output_count"].to_string());

    let code = pqc(&["refine", "pair.pqc", "--rho", "1.01"], dir.path())
        .status
        .code();
    assert_eq!(code, Some(1));

    let out = pqc(&["stats", "pair.pqc", "--json"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n"], 3);
    assert_eq!(v["mode"], "lossy");
}
