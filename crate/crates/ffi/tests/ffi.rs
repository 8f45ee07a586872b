use std::ffi::{CStr, CString};
use std::ptr;

use scri_scatter_ffi::*;

fn last_error() -> String {
    let p = scri_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn profile(values: &[f64]) -> *mut ScriProfileHandle {
    let mut p = ptr::null_mut();
    let s = unsafe { scri_profile_new(0, -200.0, 0.25, values.as_ptr(), values.len(), -170.0, -130.0, &mut p) };
    assert_eq!(s, ScriStatus::Ok);
    p
}

#[test]
fn profile_round_trips_through_handle() {
    let v: Vec<f64> = (0..401).map(|i| (i as f64 * 0.01).sin()).collect();
    let p = profile(&v);
    unsafe {
        assert_eq!(scri_profile_len(p), 401);
        let mut buf = vec![0.0; 401];
        assert_eq!(scri_profile_values(p, buf.as_mut_ptr(), buf.len()), ScriStatus::Ok);
        assert_eq!(buf, v);
        let mut small = vec![0.0; 10];
        assert_eq!(scri_profile_values(p, small.as_mut_ptr(), small.len()), ScriStatus::BufferTooSmall);
        assert!(last_error().contains("401"));
        let mut h1 = 0.0;
        assert_eq!(scri_profile_h1(p, &mut h1), ScriStatus::Ok);
        assert!(h1 > 0.0);
        scri_profile_free(p);
    }
}

#[test]
fn zero_data_scatters_to_zero() {
    let cfg = scri_config_default();
    let p = profile(&vec![0.0; 401]);
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(scri_scattering_operator(cfg, p, &mut s), ScriStatus::Ok);
        let n = scri_profile_len(s);
        let mut buf = vec![1.0; n];
        assert_eq!(scri_profile_values(s, buf.as_mut_ptr(), n), ScriStatus::Ok);
        assert!(buf.iter().all(|v| *v == 0.0));

        let mut d = ptr::null_mut();
        assert_eq!(scri_trace_plus_to_slice(cfg, p, &mut d), ScriStatus::Ok);
        let m = scri_sigma_len(d);
        let (mut th, mut xi) = (vec![1.0; m], vec![1.0; m]);
        assert_eq!(scri_sigma_values(d, ptr::null_mut(), th.as_mut_ptr(), xi.as_mut_ptr(), m), ScriStatus::Ok);
        assert!(th.iter().chain(&xi).all(|v| *v == 0.0));
        scri_sigma_free(d);
        scri_profile_free(s);
        scri_profile_free(p);
        scri_config_free(cfg);
    }
}

#[test]
fn configured_data_matches_default_scri_profile() {
    let cfg = scri_config_default();
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(scri_config_scri_data(cfg, &mut p), ScriStatus::Ok);
        assert!(scri_profile_len(p) > 2);
        scri_profile_free(p);
        scri_config_free(cfg);
    }
}

#[test]
fn config_errors_map_to_codes() {
    let mut cfg = ptr::null_mut();
    let bad = CString::new("[chart]\nbogus = 1\n").unwrap();
    assert_eq!(unsafe { scri_config_from_ini(bad.as_ptr(), &mut cfg) }, ScriStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("bogus"));

    let big = CString::new("[chart]\nr_max = 0.6\n").unwrap();
    assert_eq!(unsafe { scri_config_from_ini(big.as_ptr(), &mut cfg) }, ScriStatus::Config);

    let ok = CString::new("[grid]\nnu = 200\nnr = 24\n").unwrap();
    assert_eq!(unsafe { scri_config_from_ini(ok.as_ptr(), &mut cfg) }, ScriStatus::Ok);
    assert!(scri_last_error_message().is_null());
    unsafe { scri_config_free(cfg) };
}

#[test]
fn null_arguments_are_rejected() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { scri_config_from_ini(ptr::null(), &mut out) }, ScriStatus::NullPointer);
    assert_eq!(unsafe { scri_scattering_operator(ptr::null(), ptr::null(), &mut ptr::null_mut()) }, ScriStatus::NullPointer);
    assert_eq!(unsafe { scri_profile_len(ptr::null()) }, 0);
    unsafe {
        scri_config_free(ptr::null_mut());
        scri_profile_free(ptr::null_mut());
        scri_sigma_free(ptr::null_mut());
    }
}

#[test]
fn cli_entry_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ini = dir.path().join("bad.ini");
    std::fs::write(&ini, "[chart]\nbogus = 1\n").unwrap();
    let args: Vec<CString> = ["scri-scatter", "chart-audit", "--config", ini.to_str().unwrap()]
        .iter()
        .map(|s| CString::new(*s).unwrap())
        .collect();
    let ptrs: Vec<*const std::ffi::c_char> = args.iter().map(|a| a.as_ptr()).collect();
    assert_eq!(unsafe { scri_cli_main(ptrs.len() as i32, ptrs.as_ptr()) }, 1);
}

#[test]
fn header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/scri_scatter.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in ["scri_scattering_operator", "scri_profile_new", "scri_last_error_message", "ScriStatus_Config"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    if let Ok(out) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c", header]).output() {
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
}
