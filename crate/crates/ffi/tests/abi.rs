use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use maskfuse_ffi::*;

fn last_error() -> String {
    let p = mf_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn mask(w: u32, h: u32, bits: &[u8]) -> *mut MfMask {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mf_mask_from_bytes(w, h, bits.as_ptr(), bits.len(), &mut out) }, MfStatus::Ok);
    out
}

fn bytes(m: *const MfMask) -> Vec<u8> {
    let n = unsafe { mf_mask_width(m) * mf_mask_height(m) } as usize;
    let mut buf = vec![9u8; n];
    assert_eq!(unsafe { mf_mask_to_bytes(m, buf.as_mut_ptr(), n) }, MfStatus::Ok);
    buf
}

fn clicks(c: *const MfClickSet) -> Vec<(u32, u32, bool)> {
    let n = unsafe { mf_clickset_len(c) };
    (0..n)
        .map(|i| {
            let (mut x, mut y, mut p) = (0, 0, false);
            assert_eq!(unsafe { mf_clickset_get(c, i, &mut x, &mut y, &mut p) }, MfStatus::Ok);
            (x, y, p)
        })
        .collect()
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(mf_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn mask_lifecycle() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { mf_mask_new(3, 2, &mut m) }, MfStatus::Ok);
    assert!(mf_last_error().is_null());
    unsafe {
        assert_eq!((mf_mask_width(m), mf_mask_height(m), mf_mask_count(m)), (3, 2, 0));
        assert_eq!(mf_mask_set(m, 2, 1, true), MfStatus::Ok);
        let mut v = false;
        assert_eq!(mf_mask_get(m, 2, 1, &mut v), MfStatus::Ok);
        assert!(v);
        assert_eq!(mf_mask_count(m), 1);
        assert_eq!(mf_mask_set(m, 3, 0, true), MfStatus::InvalidArgument);
        assert!(last_error().contains('3'));
    }
    assert_eq!(bytes(m), vec![0, 0, 0, 0, 0, 1]);
    let mut small = [0u8; 4];
    assert_eq!(unsafe { mf_mask_to_bytes(m, small.as_mut_ptr(), 4) }, MfStatus::BufferTooSmall);
    unsafe { mf_mask_free(m) };
    unsafe { mf_mask_free(ptr::null_mut()) };
}

#[test]
fn null_and_size_errors() {
    let mut out = ptr::null_mut();
    unsafe {
        assert_eq!(mf_mask_new(2, 2, ptr::null_mut()), MfStatus::NullPointer);
        assert!(last_error().contains("out"));
        assert_eq!(mf_mask_from_bytes(2, 2, ptr::null(), 4, &mut out), MfStatus::NullPointer);
        assert_eq!(mf_mask_from_bytes(2, 2, [1u8; 3].as_ptr(), 3, &mut out), MfStatus::DimensionMismatch);
        assert!(out.is_null());
        assert_eq!(mf_mask_width(ptr::null()), 0);
        assert_eq!(mf_clickset_len(ptr::null()), 0);
        assert_eq!(mf_clicks_parse(ptr::null(), MfClickFormat::Auto, ptr::null_mut()), MfStatus::NullPointer);
    }
}

#[test]
fn set_algebra_and_iou() {
    let a = mask(2, 2, &[1, 1, 0, 0]);
    let b = mask(2, 2, &[0, 1, 1, 0]);
    let c = mask(3, 1, &[1, 1, 1]);
    let (mut u, mut d, mut iou) = (ptr::null_mut(), ptr::null_mut(), 0.0);
    unsafe {
        assert_eq!(mf_mask_union(a, b, &mut u), MfStatus::Ok);
        assert_eq!(mf_mask_difference(a, b, &mut d), MfStatus::Ok);
        assert_eq!(mf_mask_iou(a, b, &mut iou), MfStatus::Ok);
    }
    assert_eq!(bytes(u), vec![1, 1, 1, 0]);
    assert_eq!(bytes(d), vec![1, 0, 0, 0]);
    assert!((iou - 1.0 / 3.0).abs() < 1e-12);

    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { mf_mask_union(a, c, &mut bad) }, MfStatus::DimensionMismatch);
    assert!(bad.is_null());
    for m in [a, b, c, u, d] {
        unsafe { mf_mask_free(m) };
    }
}

#[test]
fn distance_transform_squared() {
    #[rustfmt::skip]
    let m = mask(5, 5, &[
        0, 0, 0, 0, 0,
        0, 1, 1, 1, 0,
        0, 1, 1, 1, 0,
        0, 1, 1, 1, 0,
        0, 0, 0, 0, 0,
    ]);
    let mut out = vec![0u32; 25];
    assert_eq!(unsafe { mf_distance_transform(m, out.as_mut_ptr(), 25) }, MfStatus::Ok);
    assert_eq!(out[12], 4);
    assert_eq!(out[6], 1);
    assert_eq!(out[0], 0);
    assert_eq!(unsafe { mf_distance_transform(m, out.as_mut_ptr(), 24) }, MfStatus::BufferTooSmall);
    unsafe { mf_mask_free(m) };
}

#[test]
fn select_masks_majority() {
    let prob = [0.9f32, 0.9, 0.1, 0.6, 0.2, 0.1];
    // 2 of 3 pixels above 0.5, then exactly half
    let left = mask(3, 2, &[1, 1, 0, 0, 1, 0]);
    let right = mask(3, 2, &[0, 0, 1, 1, 0, 0]);
    let props = [left as *const MfMask, right as *const MfMask];
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mf_select_masks(prob.as_ptr(), 3, 2, props.as_ptr(), 2, &mut out) }, MfStatus::Ok);
    assert_eq!(bytes(out), vec![1, 1, 0, 0, 1, 0]);
    unsafe { mf_mask_free(out) };

    let mut none = ptr::null_mut();
    assert_eq!(unsafe { mf_select_masks(prob.as_ptr(), 3, 2, ptr::null(), 0, &mut none) }, MfStatus::Ok);
    assert_eq!(unsafe { mf_mask_count(none) }, 0);

    let bad = [2.0f32; 6];
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { mf_select_masks(bad.as_ptr(), 3, 2, props.as_ptr(), 2, &mut out) }, MfStatus::InvalidArgument);
    for m in [left, right, none] {
        unsafe { mf_mask_free(m) };
    }
}

#[test]
fn grid_clicks_centres() {
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { mf_grid_clicks(10, 4, 2, &mut g) }, MfStatus::Ok);
    let mut got = clicks(g);
    got.sort();
    assert_eq!(got, vec![(2, 1, true), (2, 3, true), (7, 1, true), (7, 3, true)]);
    unsafe { mf_clickset_free(g) };

    let mut g = ptr::null_mut();
    assert_eq!(unsafe { mf_grid_clicks(10, 4, 0, &mut g) }, MfStatus::InvalidArgument);
}

#[test]
fn parse_and_serialize_round_trip() {
    let text = CString::new("Positive: [(331, 420), (498, 272)], Negative: [(5, 6)]").unwrap();
    let mut c = ptr::null_mut();
    assert_eq!(unsafe { mf_clicks_parse(text.as_ptr(), MfClickFormat::Text, &mut c) }, MfStatus::Ok);
    assert_eq!(clicks(c), vec![(331, 420, true), (498, 272, true), (5, 6, false)]);

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { mf_clicks_serialize(c, &mut s) }, MfStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(s) }.to_bytes(), text.as_bytes());
    unsafe { mf_string_free(s) };

    let json = CString::new(r#"points: [{"x": 1, "y": 2}, {"x": 3, "y": 4}]"#).unwrap();
    let mut j = ptr::null_mut();
    assert_eq!(unsafe { mf_clicks_parse(json.as_ptr(), MfClickFormat::Auto, &mut j) }, MfStatus::Ok);
    assert_eq!(clicks(j), vec![(1, 2, true), (3, 4, true)]);

    let junk = CString::new("no clicks here").unwrap();
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { mf_clicks_parse(junk.as_ptr(), MfClickFormat::Text, &mut k) }, MfStatus::Parse);
    assert!(!last_error().is_empty());
    unsafe {
        mf_clickset_free(c);
        mf_clickset_free(j);
    }
}

#[test]
fn clickset_building() {
    let c = mf_clickset_new();
    unsafe {
        assert_eq!(mf_clickset_push(c, 4, 5, false), MfStatus::Ok);
        assert_eq!(mf_clickset_push(c, 1, 2, true), MfStatus::Ok);
        let (mut x, mut y, mut p) = (0, 0, false);
        assert_eq!(mf_clickset_get(c, 2, &mut x, &mut y, &mut p), MfStatus::InvalidArgument);
    }
    assert_eq!(clicks(c), vec![(1, 2, true), (4, 5, false)]);
    unsafe { mf_clickset_free(c) };
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/maskfuse.h")
}

#[test]
fn header_declares_every_export() {
    let h = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exported: Vec<_> = src
        .lines()
        .filter(|l| l.contains("extern \"C\" fn "))
        .map(|l| l.split("fn ").nth(1).unwrap().split('(').next().unwrap())
        .collect();
    assert!(exported.len() > 20);
    for name in exported {
        assert!(h.contains(&format!("{name}(")), "{name} missing from header");
    }
    assert!(h.contains("typedef struct MfMask MfMask;"));
    assert!(h.contains("MF_STATUS_BUFFER_TOO_SMALL = 5"));
}

const SMOKE: &str = r#"
#include <stdio.h>
#include <string.h>
#include "maskfuse.h"

int main(void) {
    MfMask *m = NULL;
    if (mf_mask_new(4, 4, &m) != MF_STATUS_OK) return 1;
    mf_mask_set(m, 1, 1, true);
    mf_mask_set(m, 2, 1, true);
    MfClickSet *c = NULL;
    if (mf_clicks_parse("Positive: [(1, 1)]", MF_CLICK_FORMAT_AUTO, &c) != MF_STATUS_OK) return 2;
    char *s = NULL;
    mf_clicks_serialize(c, &s);
    printf("%llu %s\n", (unsigned long long)mf_mask_count(m), s);
    if (mf_mask_set(m, 9, 9, true) != MF_STATUS_INVALID_ARGUMENT || mf_last_error() == NULL) return 3;
    mf_string_free(s);
    mf_clickset_free(c);
    mf_mask_free(m);
    return 0;
}
"#;

#[test]
fn c_program_links_against_cdylib() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler, skipping");
        return;
    }
    // target/<profile>/deps/<test> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    if !lib_dir.join("libmaskfuse_ffi.so").exists() {
        eprintln!("no cdylib in {}, skipping", lib_dir.display());
        return;
    }
    let dir = tempfile::TempDir::new().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, SMOKE).unwrap();
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-o"])
        .arg(&bin)
        .arg(&src)
        .arg(format!("-I{}", header().parent().unwrap().display()))
        .arg(format!("-L{}", lib_dir.display()))
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-lmaskfuse_ffi")
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    assert_eq!(String::from_utf8_lossy(&out.stdout), "2 Positive: [(1, 1)], Negative: []\n");
}
