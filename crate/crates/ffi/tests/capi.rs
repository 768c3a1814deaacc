use std::ffi::{CStr, CString};
use std::ptr;

use chlab_ffi::*;

fn last_error() -> String {
    let p = chlab_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn grid(n: usize, length: f64) -> *mut ChlabGrid {
    let mut g = ptr::null_mut();
    assert_eq!(
        unsafe { chlab_grid_new(n, length, &mut g) },
        ChlabStatus::Ok
    );
    g
}

#[test]
fn version_is_crate_version() {
    let v = unsafe { CStr::from_ptr(chlab_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn grid_round_trip() {
    let g = grid(64, 20.0);
    let mut n = 0;
    assert_eq!(unsafe { chlab_grid_len(g, &mut n) }, ChlabStatus::Ok);
    assert_eq!(n, 64);
    let mut xs = vec![0.0; 64];
    let mut len = 0;
    assert_eq!(
        unsafe { chlab_grid_points(g, xs.as_mut_ptr(), xs.len(), &mut len) },
        ChlabStatus::Ok
    );
    assert_eq!(len, 64);
    assert_eq!(xs[0], -10.0);
    assert!((xs[1] - xs[0] - 20.0 / 64.0).abs() < 1e-14);
    unsafe { chlab_grid_free(g) };
}

#[test]
fn bad_grid_is_rejected() {
    let mut g = ptr::null_mut();
    assert_eq!(
        unsafe { chlab_grid_new(1, 10.0, &mut g) },
        ChlabStatus::InvalidArgument
    );
    assert!(g.is_null());
    assert!(last_error().contains("grid"));
}

#[test]
fn null_arguments_are_reported() {
    assert_eq!(
        unsafe { chlab_grid_new(64, 10.0, ptr::null_mut()) },
        ChlabStatus::NullPointer
    );
    let mut n = 0;
    assert_eq!(
        unsafe { chlab_grid_len(ptr::null(), &mut n) },
        ChlabStatus::NullPointer
    );
    assert_eq!(last_error(), "grid is null");
    unsafe {
        chlab_grid_free(ptr::null_mut());
        chlab_profile_free(ptr::null_mut());
        chlab_string_free(ptr::null_mut());
    }
}

#[test]
fn profile_matches_closed_forms() {
    let (c, w) = (4.0, 1.0);
    let g = grid(1024, 80.0);
    let mut p = ptr::null_mut();
    assert_eq!(
        unsafe { chlab_profile_new(g, c, w, 0.0, &mut p) },
        ChlabStatus::Ok
    );

    let mut phi = vec![0.0; 1024];
    let mut len = 0;
    assert_eq!(
        unsafe { chlab_profile_phi(p, phi.as_mut_ptr(), phi.len(), &mut len) },
        ChlabStatus::Ok
    );
    let peak = phi.iter().cloned().fold(f64::MIN, f64::max);
    assert!((peak - (c - 2.0 * w)).abs() < 1e-10);

    let mut m = vec![0.0; 1024];
    assert_eq!(
        unsafe { chlab_profile_momentum(p, m.as_mut_ptr(), m.len(), &mut len) },
        ChlabStatus::Ok
    );
    assert!(m.iter().all(|v| *v + w > 0.0));

    let mut res = f64::NAN;
    assert_eq!(
        unsafe { chlab_profile_residual(p, &mut res) },
        ChlabStatus::Ok
    );
    assert!(res < 1e-7);

    let mut inv = ChlabInvariants::default();
    assert_eq!(
        unsafe { chlab_closed_form_invariants(c, w, &mut inv) },
        ChlabStatus::Ok
    );
    let mut kappas = [0.0; 4];
    assert_eq!(
        unsafe { chlab_profile_kappas(p, kappas.as_mut_ptr(), 4, &mut len) },
        ChlabStatus::Ok
    );
    assert_eq!(len, 1);
    assert!((kappas[0] - inv.kappa).abs() < 1e-5);

    unsafe {
        chlab_profile_free(p);
        chlab_grid_free(g);
    }
}

#[test]
fn short_buffers_report_required_length() {
    let g = grid(128, 40.0);
    let mut buf = [0.0; 8];
    let mut len = 0;
    assert_eq!(
        unsafe { chlab_grid_points(g, buf.as_mut_ptr(), buf.len(), &mut len) },
        ChlabStatus::BufferTooSmall
    );
    assert_eq!(len, 128);
    unsafe { chlab_grid_free(g) };
}

#[test]
fn slow_soliton_is_invalid() {
    let mut inv = ChlabInvariants::default();
    assert_eq!(
        unsafe { chlab_closed_form_invariants(1.5, 1.0, &mut inv) },
        ChlabStatus::InvalidArgument
    );
}

#[test]
fn run_toml_returns_report() {
    let dir = tempfile::tempdir().unwrap();
    let toml = format!(
        "experiment = \"profile-identities\"\nseed = 3\noutput_dir = {:?}\n\n[params]\nc = 4.0\nomega = 1.0\n",
        dir.path().join("run").display().to_string()
    );
    let src = CString::new(toml).unwrap();
    let mut json = ptr::null_mut();
    let mut passed = -1;
    assert_eq!(
        unsafe { chlab_run_toml(src.as_ptr(), &mut json, &mut passed) },
        ChlabStatus::Ok
    );
    assert_eq!(passed, 1);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    unsafe { chlab_string_free(json) };
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["experiment"], "profile-identities");
    assert_eq!(report["seed"], 3);
    assert!(dir.path().join("run/report.json").exists());
}

#[test]
fn run_toml_rejects_unknown_experiment() {
    let src = CString::new("experiment = \"profile-identitie\"\n").unwrap();
    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { chlab_run_toml(src.as_ptr(), &mut json, ptr::null_mut()) },
        ChlabStatus::Config
    );
    assert!(json.is_null());
    assert!(last_error().contains("profile-identities"));
}

#[test]
fn header_declares_every_export() {
    let header = include_str!("../include/chlab.h");
    let src = include_str!("../src/lib.rs");
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 12);
    for name in exports {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
}
