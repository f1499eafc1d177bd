use std::ffi::{CStr, CString};
use std::ptr;

use pqc_ffi::*;

const FIGURE: [u32; 10] = [5, 2, 6, 3, 8, 4, 9, 6, 10, 6];

fn build(coords: &[u32], width: u32, gamma: u32, lossless: bool) -> *mut PqcStore {
    let mut h = ptr::null_mut();
    let st = unsafe {
        pqc_store_build(
            coords.as_ptr(),
            coords.len() / 2,
            2,
            width,
            gamma,
            lossless,
            &mut h,
        )
    };
    assert_eq!(st, PqcStatus::Ok);
    assert!(!h.is_null());
    h
}

fn last_error() -> String {
    let p = pqc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn figure_points_by_rank() {
    let h = build(&FIGURE, 5, 0, true);
    let mut n = 0;
    let mut dim = 0;
    unsafe {
        assert_eq!(pqc_store_len(h, &mut n), PqcStatus::Ok);
        assert_eq!(pqc_store_dim(h, &mut dim), PqcStatus::Ok);
    }
    assert_eq!((n, dim), (5, 2));
    let mut got = Vec::new();
    for rank in 0..n {
        let mut c = [0u32; 2];
        let mut height = 99;
        assert_eq!(
            unsafe { pqc_store_point_at(h, rank, c.as_mut_ptr(), &mut height) },
            PqcStatus::Ok
        );
        assert_eq!(height, 0);
        got.extend_from_slice(&c);
    }
    assert_eq!(got, FIGURE);
    let mut c = [0u32; 2];
    assert_eq!(
        unsafe { pqc_store_point_at(h, 5, c.as_mut_ptr(), ptr::null_mut()) },
        PqcStatus::InvalidArgument
    );
    unsafe { pqc_store_free(h) };
}

#[test]
fn queries_and_insert() {
    let h = build(&FIGURE, 5, 0, true);
    let (mut lo, mut hi) = (0, 0);
    let root = [0u32, 0];
    assert_eq!(
        unsafe { pqc_store_vertices(h, root.as_ptr(), 5, &mut lo, &mut hi) },
        PqcStatus::Ok
    );
    assert_eq!((lo, hi), (0, 5));

    let (mut corner, mut height) = ([0u32; 2], 0);
    let q = [30u32, 30];
    let st = unsafe { pqc_store_square_of(h, q.as_ptr(), corner.as_mut_ptr(), &mut height) };
    assert_eq!(st, PqcStatus::Ok);
    assert!(height >= 1);

    let p = [30u32, 1];
    assert_eq!(unsafe { pqc_store_insert(h, p.as_ptr(), 0) }, PqcStatus::Ok);
    assert_eq!(
        unsafe { pqc_store_insert(h, p.as_ptr(), 0) },
        PqcStatus::Duplicate
    );
    assert!(last_error().contains("duplicate"));
    let far = [40u32, 1];
    assert_eq!(
        unsafe { pqc_store_insert(h, far.as_ptr(), 0) },
        PqcStatus::OutOfDomain
    );
    let mut n = 0;
    unsafe { pqc_store_len(h, &mut n) };
    assert_eq!(n, 6);
    unsafe { pqc_store_free(h) };
}

#[test]
fn save_and_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("s.pqc").to_str().unwrap()).unwrap();
    let pts: Vec<u32> = (0..40u32)
        .flat_map(|i| [i * 97 % 1000, i * 31 % 1000])
        .collect();
    let h = build(&pts, 10, 3, false);
    assert_eq!(unsafe { pqc_store_save(h, path.as_ptr()) }, PqcStatus::Ok);
    let mut g = ptr::null_mut();
    assert_eq!(
        unsafe { pqc_store_open(path.as_ptr(), &mut g) },
        PqcStatus::Ok
    );
    let (mut a, mut b) = (0, 0);
    unsafe {
        pqc_store_len(h, &mut a);
        pqc_store_len(g, &mut b);
    }
    assert_eq!(a, b);
    for rank in 0..a {
        let (mut x, mut y) = ([0u32; 2], [0u32; 2]);
        let (mut hx, mut hy) = (0, 0);
        unsafe {
            pqc_store_point_at(h, rank, x.as_mut_ptr(), &mut hx);
            pqc_store_point_at(g, rank, y.as_mut_ptr(), &mut hy);
        }
        assert_eq!((x, hx), (y, hy));
    }
    unsafe {
        pqc_store_free(h);
        pqc_store_free(g);
    }
}

#[test]
fn error_statuses() {
    let mut h = ptr::null_mut();
    let missing = CString::new("/nonexistent/dir/s.pqc").unwrap();
    assert_eq!(
        unsafe { pqc_store_open(missing.as_ptr(), &mut h) },
        PqcStatus::Io
    );
    assert!(h.is_null());
    let st = unsafe { pqc_store_build(ptr::null(), 0, 4, 8, 0, true, &mut h) };
    assert_eq!(st, PqcStatus::InvalidArgument);
    let st = unsafe { pqc_store_build(ptr::null(), 3, 2, 8, 0, true, &mut h) };
    assert_eq!(st, PqcStatus::NullPointer);
    let dup = [1u32, 1, 1, 1];
    let st = unsafe { pqc_store_build(dup.as_ptr(), 2, 2, 8, 0, true, &mut h) };
    assert_eq!(st, PqcStatus::Duplicate);
    let s = unsafe { CStr::from_ptr(pqc_status_str(PqcStatus::Corrupt as i32)) };
    assert_eq!(s.to_str().unwrap(), "corrupt store");
    let s = unsafe { CStr::from_ptr(pqc_status_str(77)) };
    assert_eq!(s.to_str().unwrap(), "unknown status");
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/pqc.h")).unwrap();
    for name in [
        "pqc_store_build",
        "pqc_store_open",
        "pqc_store_save",
        "pqc_store_len",
        "pqc_store_dim",
        "pqc_store_point_at",
        "pqc_store_square_of",
        "pqc_store_vertices",
        "pqc_store_insert",
        "pqc_store_free",
        "pqc_last_error",
        "pqc_status_str",
        "typedef struct PqcStore PqcStore",
        "PQC_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name} missing from pqc.h");
    }
}
