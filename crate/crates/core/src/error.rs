use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library and surfaced by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("point {coords:?} lies outside the {width}-bit domain")]
    OutOfDomain { coords: Vec<u64>, width: u32 },

    #[error("value {value} does not fit in {width} bits")]
    Overflow { value: u64, width: u32 },

    #[error("bit stream truncated at bit {at}")]
    Truncated { at: usize },

    #[error("corrupt payload in block {block} at bit {bit}: {reason}")]
    CorruptPayload {
        block: usize,
        bit: usize,
        reason: String,
    },

    #[error("corrupt store file: {0}")]
    CorruptFile(String),

    #[error("input is not sorted in Morton order at position {0}")]
    Unsorted(usize),

    #[error("duplicate point {0:?}")]
    Duplicate(Vec<u32>),

    #[error("rank {rank} out of bounds for store of {len} points")]
    RankOutOfBounds { rank: usize, len: usize },

    #[error("operation requires dimension 2, store has dimension {0}")]
    UnsupportedDimension(u8),

    #[error("nearest neighbour undefined: source holds fewer than two points")]
    TooFewPoints,

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("line {line}: coordinate {value} does not fit in {width} bits")]
    OutOfRange {
        line: usize,
        value: String,
        width: u32,
    },

    #[error("refinement did not terminate within {0} rounds")]
    NonTermination(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
