//! C ABI over the compressed point store.
//!
//! Stores are opaque `PqcStore` handles created by `pqc_store_build` or
//! `pqc_store_open` and released with `pqc_store_free`. Every fallible call
//! returns a `PqcStatus`; on failure a message is available from
//! `pqc_last_error` on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use pqc::error::Error;
use pqc::geom::HeightedPoint;
use pqc::morton::{Config, Point, TrieSquare};
use pqc::qtree::{self, PointSource};
use pqc::store::{CompressedStore, Mode};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PqcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    OutOfDomain = 5,
    Duplicate = 6,
    Corrupt = 7,
    Unsupported = 8,
    Panic = 9,
}

/// Opaque store handle.
pub struct PqcStore {
    inner: CompressedStore,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PqcStatus {
    match e {
        Error::Config(_) | Error::RankOutOfBounds { .. } | Error::TooFewPoints => {
            PqcStatus::InvalidArgument
        }
        Error::Parse { .. } | Error::Unsorted(_) => PqcStatus::Parse,
        Error::Io { .. } => PqcStatus::Io,
        Error::OutOfDomain { .. } | Error::OutOfRange { .. } | Error::Overflow { .. } => {
            PqcStatus::OutOfDomain
        }
        Error::Duplicate(_) => PqcStatus::Duplicate,
        Error::Truncated { .. } | Error::CorruptPayload { .. } | Error::CorruptFile(_) => {
            PqcStatus::Corrupt
        }
        Error::UnsupportedDimension(_) | Error::NonTermination(_) => PqcStatus::Unsupported,
    }
}

struct Fail(PqcStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(PqcStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> PqcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PqcStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            PqcStatus::Panic
        }
    }
}

unsafe fn store_ref<'a>(store: *const PqcStore) -> Result<&'a CompressedStore, Fail> {
    store
        .as_ref()
        .map(|s| &s.inner)
        .ok_or_else(|| null("store"))
}

unsafe fn read_point(coords: *const u32, cfg: &Config) -> Result<Point, Fail> {
    if coords.is_null() {
        return Err(null("coords"));
    }
    let slice = std::slice::from_raw_parts(coords, cfg.dim as usize);
    let p = Point::from_slice(slice);
    cfg.check_point(&p)?;
    Ok(p)
}

unsafe fn write_point(p: &Point, out: *mut u32) {
    std::ptr::copy_nonoverlapping(p.coords().as_ptr(), out, p.dim() as usize);
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Fail(PqcStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

fn publish(store: CompressedStore, out: *mut *mut PqcStore) {
    let handle = Box::into_raw(Box::new(PqcStore { inner: store }));
    // SAFETY: callers check `out` before building the store.
    unsafe { *out = handle };
}

/// Builds a store from `n` points packed as `n * dim` coordinates.
/// `lossless` ignores `gamma`.
///
/// # Safety
/// `coords` must point to `n * dim` readable `u32` values (it may be null when
/// `n` is zero). `out` must be a valid location for one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn pqc_store_build(
    coords: *const u32,
    n: usize,
    dim: u8,
    width: u32,
    gamma: u32,
    lossless: bool,
    out: *mut *mut PqcStore,
) -> PqcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = Config::new(dim, width, if lossless { 0 } else { gamma })?;
        let d = dim as usize;
        let points: Vec<Point> = if n == 0 {
            Vec::new()
        } else {
            if coords.is_null() {
                return Err(null("coords"));
            }
            let total = n
                .checked_mul(d)
                .ok_or_else(|| Fail(PqcStatus::InvalidArgument, "point count overflows".into()))?;
            std::slice::from_raw_parts(coords, total)
                .chunks_exact(d)
                .map(Point::from_slice)
                .collect()
        };
        let mode = if lossless {
            Mode::Lossless
        } else {
            Mode::Lossy
        };
        publish(CompressedStore::from_points(&points, cfg, mode)?, out);
        Ok(())
    })
}

/// Loads a PQC1 file.
///
/// # Safety
/// `path` must be a NUL-terminated string. `out` must be a valid location for
/// one handle pointer.
#[no_mangle]
pub unsafe extern "C" fn pqc_store_open(path: *const c_char, out: *mut *mut PqcStore) -> PqcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = path_arg(path)?;
        publish(CompressedStore::load(path)?, out);
        Ok(())
    })
}

/// Writes the store as a PQC1 file.
///
/// # Safety
/// `store` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pqc_store_save(store: *const PqcStore, path: *const c_char) -> PqcStatus {
    guard(|| {
        let s = store_ref(store)?;
        s.save(path_arg(path)?)?;
        Ok(())
    })
}

/// Number of stored points.
///
/// # Safety
/// `store` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pqc_store_len(store: *const PqcStore, out: *mut usize) -> PqcStatus {
    guard(|| {
        let s = store_ref(store)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.len();
        Ok(())
    })
}

/// Point dimension of the store.
///
/// # Safety
/// `store` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pqc_store_dim(store: *const PqcStore, out: *mut u8) -> PqcStatus {
    guard(|| {
        let s = store_ref(store)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.config().dim;
        Ok(())
    })
}

/// The point of Morton rank `rank` and its leaf height.
///
/// # Safety
/// `store` must be a live handle, `coords_out` must have room for `dim`
/// values and `height_out` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn pqc_store_point_at(
    store: *const PqcStore,
    rank: usize,
    coords_out: *mut u32,
    height_out: *mut u32,
) -> PqcStatus {
    guard(|| {
        let s = store_ref(store)?;
        if coords_out.is_null() {
            return Err(null("coords_out"));
        }
        let hp = s.point_at(rank)?;
        write_point(&hp.point, coords_out);
        if !height_out.is_null() {
            *height_out = hp.height;
        }
        Ok(())
    })
}

/// Largest uncrowded trie square containing the point.
///
/// # Safety
/// `store` must be a live handle, `coords` must hold `dim` values,
/// `corner_out` must have room for `dim` values and `height_out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn pqc_store_square_of(
    store: *const PqcStore,
    coords: *const u32,
    corner_out: *mut u32,
    height_out: *mut u32,
) -> PqcStatus {
    guard(|| {
        let s = store_ref(store)?;
        let p = read_point(coords, s.config())?;
        if corner_out.is_null() || height_out.is_null() {
            return Err(null("output"));
        }
        let sq = qtree::square_of(&p, s)?;
        write_point(&sq.corner, corner_out);
        *height_out = sq.height;
        Ok(())
    })
}

/// Rank interval `[lo, hi)` of the points inside the square with minimum
/// corner `corner` and side `2^height`.
///
/// # Safety
/// `store` must be a live handle, `corner` must hold `dim` values and both
/// outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn pqc_store_vertices(
    store: *const PqcStore,
    corner: *const u32,
    height: u32,
    lo_out: *mut usize,
    hi_out: *mut usize,
) -> PqcStatus {
    guard(|| {
        let s = store_ref(store)?;
        let c = read_point(corner, s.config())?;
        if lo_out.is_null() || hi_out.is_null() {
            return Err(null("output"));
        }
        let sq = TrieSquare::new(c, height, s.config().width)?;
        let range = qtree::vertices(&sq, s);
        *lo_out = range.lo;
        *hi_out = range.hi;
        Ok(())
    })
}

/// Inserts one point. Lossy stores require it already rounded for `height`;
/// lossless stores ignore `height`.
///
/// # Safety
/// `store` must be a live handle not shared with another thread during the
/// call, and `coords` must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn pqc_store_insert(
    store: *mut PqcStore,
    coords: *const u32,
    height: u32,
) -> PqcStatus {
    guard(|| {
        let s = &mut store.as_mut().ok_or_else(|| null("store"))?.inner;
        let point = read_point(coords, s.config())?;
        s.insert(HeightedPoint { point, height })?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `store` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pqc_store_free(store: *mut PqcStore) {
    if !store.is_null() {
        drop(Box::from_raw(store));
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pqc_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// Static description of a status code; unknown codes get a generic text.
#[no_mangle]
pub extern "C" fn pqc_status_str(code: i32) -> *const c_char {
    let s: &'static CStr = match code {
        0 => c"ok",
        1 => c"null pointer",
        2 => c"invalid argument",
        3 => c"parse error",
        4 => c"i/o error",
        5 => c"value outside the coordinate domain",
        6 => c"duplicate point",
        7 => c"corrupt store",
        8 => c"unsupported operation",
        9 => c"internal panic",
        _ => c"unknown status",
    };
    s.as_ptr()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(
            status_of(&Error::Duplicate(vec![1, 2])),
            PqcStatus::Duplicate
        );
        assert_eq!(
            status_of(&Error::Overflow { value: 9, width: 2 }),
            PqcStatus::OutOfDomain
        );
        assert_eq!(
            status_of(&Error::CorruptFile("x".into())),
            PqcStatus::Corrupt
        );
    }

    #[test]
    fn null_handles_are_rejected() {
        let mut n = 0usize;
        let st = unsafe { pqc_store_len(std::ptr::null(), &mut n) };
        assert_eq!(st, PqcStatus::NullPointer);
        assert!(!pqc_last_error().is_null());
        unsafe { pqc_store_free(std::ptr::null_mut()) };
    }
}
