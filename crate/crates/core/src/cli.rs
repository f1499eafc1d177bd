//! The `pqc` command-line tool.
//!
//! Every subcommand prints `key=value` lines (or one JSON object with
//! `--json`). Exit codes: 0 success, 1 usage or malformed input, 2 I/O,
//! 3 a coordinate or value that does not fit the configured width.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::geom::HeightedPoint;
use crate::ingest::{read_header, read_multiscan_with, InputReader, PointFileReader};
use crate::morton::{Config, Point, TrieSquare};
use crate::oracle::{generate_epsilon_net, EpsilonNetSpec};
use crate::qtree::{restricted_voronoi, square_of, vertices};
use crate::refine::{refine, RefineParams};
use crate::store::{CompressedStore, Mode};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;

const DEFAULT_WIDTH: u32 = 32;
const DEFAULT_GAMMA: u32 = 5;

#[derive(Debug, Parser)]
#[command(name = "pqc", version, about = "Compressed quadtree point store")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compress a text point file into a PQC1 store.
    Compress(CompressArgs),
    /// Write a store's points back out as text.
    Decompress(DecompressArgs),
    /// Print header fields, sizes and the block-size histogram.
    Stats(StatsArgs),
    /// Answer a square-of, vertices or voronoi query against a store.
    Query(QueryArgs),
    /// Insert Steiner points until every vertex is well spaced.
    Refine(RefineArgs),
    /// Generate a jittered-grid point set.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Shared {
    /// Point dimension (2 or 3).
    #[arg(long)]
    pub dim: Option<u8>,
    /// Bits per coordinate.
    #[arg(long)]
    pub width: Option<u32>,
    /// Rounding precision for lossy stores.
    #[arg(long, conflicts_with = "lossless")]
    pub gamma: Option<u32>,
    /// Store points exactly.
    #[arg(long)]
    pub lossless: bool,
    /// Read real coordinates and map `x` to `floor(x * scale)`.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Generator seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path; the default depends on the command.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Print one JSON object instead of `key=value` lines.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    /// Text point file.
    pub input: PathBuf,
    #[command(flatten)]
    pub shared: Shared,
    /// New coordinate bits consumed per pass of a lossy build.
    #[arg(long, default_value_t = 1, conflicts_with = "lossless")]
    pub bits_per_scan: u32,
}

#[derive(Debug, Args)]
pub struct DecompressArgs {
    /// PQC1 store file.
    pub store: PathBuf,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// PQC1 store file.
    pub store: PathBuf,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QueryKind {
    SquareOf,
    Vertices,
    Voronoi,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// PQC1 store file.
    pub store: PathBuf,
    pub kind: QueryKind,
    /// Query point, or the square's corner for `vertices` (root if omitted).
    pub coords: Vec<u32>,
    /// Square height for `vertices`.
    #[arg(long)]
    pub height: Option<u32>,
    /// Target aspect ratio; the voronoi clip radius is `2·rho·NN`.
    #[arg(long)]
    pub rho: Option<f64>,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// PQC1 store file.
    pub store: PathBuf,
    /// Target aspect ratio; must be at least `1 + 2^-gamma`.
    #[arg(long)]
    pub rho: f64,
    /// Give up after this many rounds.
    #[arg(long, default_value_t = RefineParams::DEFAULT_MAX_ROUNDS)]
    pub max_rounds: usize,
    #[command(flatten)]
    pub shared: Shared,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Grid spacing before jitter.
    #[arg(long, default_value_t = 64)]
    pub f0: u32,
    /// Jitter as a fraction of the spacing, below one.
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    #[command(flatten)]
    pub shared: Shared,
}

/// Failure of one invocation.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Lib(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_PARSE,
            CliError::Lib(e) => error_exit_code(e),
        }
    }
}

pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::OutOfRange { .. } | Error::OutOfDomain { .. } | Error::Overflow { .. } => {
            EXIT_CAPACITY
        }
        _ => EXIT_PARSE,
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Ordered report lines.
#[derive(Debug, Default)]
struct Report(Vec<(String, Value)>);

impl Report {
    fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.0.push((key.to_string(), value.into()));
    }

    fn emit(&self, json: bool, out: &mut dyn Write) -> Result<()> {
        let text = if json {
            let map: Map<String, Value> = self.0.iter().cloned().collect();
            format!("{}\n", Value::Object(map))
        } else {
            self.0
                .iter()
                .map(|(k, v)| match v {
                    Value::String(s) => format!("{k}={s}\n"),
                    other => format!("{k}={other}\n"),
                })
                .collect()
        };
        out.write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))
    }
}

fn coords_text(p: &Point) -> String {
    p.coords()
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn bpv(bits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        bits as f64 / n as f64
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn put_sizes(r: &mut Report, store: &CompressedStore, file_bytes: usize) {
    let n = store.len();
    let cfg = store.config();
    let raw = cfg.dim as usize * cfg.width as usize * n;
    r.put("file_bits", file_bytes * 8);
    r.put("payload_bits", store.payload_bits());
    r.put("bpv", round3(bpv(file_bytes * 8, n)));
    r.put("payload_bpv", round3(bpv(store.payload_bits(), n)));
    r.put("raw_bits", raw);
    r.put(
        "ratio",
        if raw == 0 {
            0.0
        } else {
            round3((file_bytes * 8) as f64 / raw as f64)
        },
    );
}

fn put_counters(r: &mut Report, store: &CompressedStore) {
    let c = store.counters();
    r.put("blocks_decoded", c.blocks_decoded);
    r.put("searches", c.searches);
}

fn load_store(path: &Path, rho: Option<f64>) -> Result<(CompressedStore, usize)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let store = CompressedStore::from_bytes(&bytes, rho)?;
    Ok((store, bytes.len()))
}

fn save_store(store: &CompressedStore, path: &Path) -> Result<usize> {
    let bytes = store.to_bytes();
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len())
}

fn check_flags(shared: &Shared) -> std::result::Result<(), CliError> {
    if let Some(d) = shared.dim {
        if d != 2 && d != 3 {
            return Err(usage(format!("--dim must be 2 or 3, got {d}")));
        }
    }
    if let Some(s) = shared.scale {
        if !(s.is_finite() && s > 0.0) {
            return Err(usage(format!("--scale must be positive, got {s}")));
        }
    }
    Ok(())
}

fn cmd_compress(a: &CompressArgs, out: &mut dyn Write) -> std::result::Result<(), CliError> {
    let s = &a.shared;
    if a.bits_per_scan == 0 {
        return Err(usage("--bits-per-scan must be at least 1"));
    }
    let header = read_header(&a.input)?.unwrap_or_default();
    let dim = s.dim.or(header.dim).unwrap_or(2);
    let width = s.width.or(header.width).unwrap_or(DEFAULT_WIDTH);
    let scale = s.scale.or(header.scale);
    let gamma = if s.lossless {
        0
    } else {
        s.gamma.unwrap_or(DEFAULT_GAMMA).min(width)
    };
    let cfg = Config::new(dim, width, gamma)?;
    let output = s
        .output
        .clone()
        .unwrap_or_else(|| a.input.with_extension("pqc"));

    let mut reader = PointFileReader::new(&a.input, cfg, scale);
    let store = if s.lossless {
        let mut store = CompressedStore::empty(cfg, Mode::Lossless);
        reader.scan(0, &mut |_, p| {
            store.insert(HeightedPoint {
                point: p,
                height: 0,
            })
        })?;
        store
    } else {
        read_multiscan_with(&mut reader, &cfg, a.bits_per_scan)?
    };
    let file_bytes = save_store(&store, &output)?;

    let mut r = Report::default();
    r.put("output", output.display().to_string());
    r.put("mode", if s.lossless { "lossless" } else { "lossy" });
    r.put("dim", dim);
    r.put("width", width);
    r.put("gamma", gamma);
    r.put("n", store.len());
    r.put("passes", reader.passes());
    r.put("blocks", store.blocks().len());
    put_sizes(&mut r, &store, file_bytes);
    r.emit(s.json, out)?;
    Ok(())
}

fn cmd_decompress(a: &DecompressArgs, out: &mut dyn Write) -> std::result::Result<(), CliError> {
    let (store, _) = load_store(&a.store, None)?;
    let cfg = store.config();
    let mut text = format!("# pqc d={} w={}\n", cfg.dim, cfg.width);
    for hp in store.iter() {
        let hp = hp?;
        let line: Vec<String> = hp.point.coords().iter().map(|c| c.to_string()).collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    match &a.shared.output {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            w.write_all(text.as_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(path, e))?;
            let mut r = Report::default();
            r.put("output", path.display().to_string());
            r.put("n", store.len());
            r.emit(a.shared.json, out)?;
        }
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))?,
    }
    Ok(())
}

fn cmd_stats(a: &StatsArgs, out: &mut dyn Write) -> std::result::Result<(), CliError> {
    let (store, file_bytes) = load_store(&a.store, None)?;
    let cfg = store.config();
    let mut r = Report::default();
    r.put("format", "PQC1");
    r.put(
        "mode",
        match store.mode() {
            Mode::Lossless => "lossless",
            Mode::Lossy => "lossy",
        },
    );
    r.put("dim", cfg.dim);
    r.put("width", cfg.width);
    r.put("gamma", cfg.gamma);
    r.put("n", store.len());
    r.put("blocks", store.blocks().len());
    put_sizes(&mut r, &store, file_bytes);
    let hist = store
        .block_histogram()
        .iter()
        .map(|(size, count)| format!("{size}:{count}"))
        .collect::<Vec<_>>()
        .join(",");
    r.put("block_histogram", hist);
    r.emit(a.shared.json, out)?;
    Ok(())
}

fn query_point(coords: &[u32], cfg: &Config) -> std::result::Result<Point, CliError> {
    if coords.len() != cfg.dim as usize {
        return Err(usage(format!(
            "expected {} coordinates, got {}",
            cfg.dim,
            coords.len()
        )));
    }
    let p = Point::from_slice(coords);
    cfg.check_point(&p)?;
    Ok(p)
}

fn cmd_query(a: &QueryArgs, out: &mut dyn Write) -> std::result::Result<(), CliError> {
    if a.height.is_some() && a.kind != QueryKind::Vertices {
        return Err(usage("--height only applies to vertices queries"));
    }
    let (store, _) = load_store(&a.store, a.rho)?;
    let cfg = *store.config();
    store.reset_counters();
    let mut r = Report::default();
    match a.kind {
        QueryKind::SquareOf => {
            let p = query_point(&a.coords, &cfg)?;
            let s = square_of(&p, &store)?;
            r.put("corner", coords_text(&s.corner));
            r.put("height", s.height);
            r.put("side", s.side());
        }
        QueryKind::Vertices => {
            let s = if a.coords.is_empty() {
                if a.height.is_some() {
                    return Err(usage("--height needs a corner"));
                }
                cfg.root()
            } else {
                let corner = query_point(&a.coords, &cfg)?;
                let height = a.height.ok_or_else(|| usage("vertices needs --height"))?;
                TrieSquare::new(corner, height, cfg.width)?
            };
            let range = vertices(&s, &store);
            r.put("corner", coords_text(&s.corner));
            r.put("height", s.height);
            r.put("lo", range.lo);
            r.put("hi", range.hi);
            r.put("count", range.len());
        }
        QueryKind::Voronoi => {
            let p = query_point(&a.coords, &cfg)?;
            let cell = restricted_voronoi(&p, &store)?;
            let neighbors: Vec<String> = cell.neighbors.iter().map(coords_text).collect();
            let polygon: Vec<String> = cell
                .polygon_f64()
                .iter()
                .map(|v| format!("{},{}", round3(v[0]), round3(v[1])))
                .collect();
            r.put("nearest", coords_text(&cell.nearest));
            r.put("nn2", cell.nn2 as u64);
            r.put("aspect", round3(cell.aspect));
            r.put("clip_bounded", cell.clip_bounded);
            r.put("neighbor_count", cell.neighbors.len());
            r.put("neighbors", neighbors.join(" "));
            r.put("polygon", polygon.join(" "));
            r.put("squares_scanned", cell.squares_scanned);
        }
    }
    put_counters(&mut r, &store);
    r.emit(a.shared.json, out)?;
    Ok(())
}

fn cmd_refine(a: &RefineArgs, out: &mut dyn Write) -> std::result::Result<(), CliError> {
    let (store, _) = load_store(&a.store, None)?;
    let gamma = a.shared.gamma.unwrap_or(store.config().gamma);
    let mut params = RefineParams::new(a.rho, gamma);
    params.max_rounds = a.max_rounds;
    let output = a
        .shared
        .output
        .clone()
        .unwrap_or_else(|| a.store.with_extension("refined.pqc"));
    let (mesh, report) = refine(&store, &params)?;
    let file_bytes = save_store(&mesh, &output)?;
    if a.shared.json {
        let mut v = serde_json::to_value(&report).map_err(|e| usage(e.to_string()))?;
        v["output"] = json!(output.display().to_string());
        v["file_bits"] = json!(file_bytes * 8);
        writeln!(out, "{v}").map_err(|e| Error::io("<stdout>", e))?;
    } else {
        let mut r = Report::default();
        r.put("output", output.display().to_string());
        r.put("file_bits", file_bytes * 8);
        let text = report.to_kv();
        r.emit(false, out)?;
        out.write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(())
}

fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> std::result::Result<(), CliError> {
    let s = &a.shared;
    if s.dim.is_some_and(|d| d != 2) {
        return Err(usage("gen only produces 2D sets"));
    }
    if !(0.0..1.0).contains(&a.epsilon) {
        return Err(usage(format!(
            "--epsilon must be in [0, 1), got {}",
            a.epsilon
        )));
    }
    let width = s.width.unwrap_or(16);
    let spec = EpsilonNetSpec::new(width, a.f0, a.epsilon);
    let seed = s.seed.unwrap_or(0);
    let points = generate_epsilon_net(&spec, seed)?;
    let mut text = format!("# pqc d=2 w={width}\n");
    for p in &points {
        text.push_str(&format!("{} {}\n", p.get(0), p.get(1)));
    }
    match &s.output {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
            let mut r = Report::default();
            r.put("output", path.display().to_string());
            r.put("n", points.len());
            r.put("width", width);
            r.put("seed", seed);
            r.put("rho", round3(spec.advertised_rho()));
            r.emit(s.json, out)?;
        }
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))?,
    }
    Ok(())
}

/// Runs a parsed command, writing its report to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> std::result::Result<(), CliError> {
    let shared = match &cli.command {
        Command::Compress(a) => &a.shared,
        Command::Decompress(a) => &a.shared,
        Command::Stats(a) => &a.shared,
        Command::Query(a) => &a.shared,
        Command::Refine(a) => &a.shared,
        Command::Gen(a) => &a.shared,
    };
    check_flags(shared)?;
    match &cli.command {
        Command::Compress(a) => cmd_compress(a, out),
        Command::Decompress(a) => cmd_decompress(a, out),
        Command::Stats(a) => cmd_stats(a, out),
        Command::Query(a) => cmd_query(a, out),
        Command::Refine(a) => cmd_refine(a, out),
        Command::Gen(a) => cmd_gen(a, out),
    }
}

/// Parses `args` (program name first), runs, and returns the exit code.
/// Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
