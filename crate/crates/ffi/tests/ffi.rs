use std::ffi::{CStr, CString};
use std::ptr;

use cdw_ffi::*;

const SMALL: &str = "[array]\nelements = 16\n[scheme]\nkind = dw\nrv_mm = 2\n[excitation]\ncode_bits = 2\n\
[phantom]\npreset = vertical_pins\n[run]\nmax_depth_mm = 12\nnoise_power = 1e-6\nnoise_realizations = 2\n";

fn last_error() -> String {
    unsafe { CStr::from_ptr(cdw_last_error_message()) }.to_string_lossy().into_owned()
}

fn config(text: &str) -> *mut CdwConfig {
    let t = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { cdw_config_from_str(t.as_ptr(), &mut cfg) }, CdwStatus::Ok, "{}", last_error());
    cfg
}

#[test]
fn version_is_set() {
    let v = unsafe { CStr::from_ptr(cdw_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn bad_config_reports_message() {
    let t = CString::new("[scheme]\nkind = dw\n").unwrap();
    let mut cfg = ptr::null_mut();
    let st = unsafe { cdw_config_from_str(t.as_ptr(), &mut cfg) };
    assert_eq!(st, CdwStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("rv_mm"), "{}", last_error());
}

#[test]
fn null_arguments_are_rejected() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { cdw_config_from_str(ptr::null(), &mut cfg) }, CdwStatus::NullPointer);
    assert_eq!(unsafe { cdw_run(ptr::null(), ptr::null(), ptr::null_mut()) }, CdwStatus::NullPointer);
    unsafe {
        cdw_config_free(ptr::null_mut());
        cdw_run_free(ptr::null_mut());
    }
}

#[test]
fn set_rejects_invalid_and_keeps_state() {
    let cfg = config(SMALL);
    let (s, k) = (CString::new("scheme").unwrap(), CString::new("kind").unwrap());
    let bad = CString::new("sta").unwrap();
    // sta with rv_mm set is inconsistent
    assert_eq!(unsafe { cdw_config_set(cfg, s.as_ptr(), k.as_ptr(), bad.as_ptr()) }, CdwStatus::Config);
    let unknown = CString::new("nope").unwrap();
    assert_eq!(unsafe { cdw_config_set(cfg, s.as_ptr(), unknown.as_ptr(), bad.as_ptr()) }, CdwStatus::Config);
    let rv = CString::new("rv_mm").unwrap();
    let v = CString::new("3").unwrap();
    assert_eq!(unsafe { cdw_config_set(cfg, s.as_ptr(), rv.as_ptr(), v.as_ptr()) }, CdwStatus::Ok);
    unsafe { cdw_config_free(cfg) };
}

#[test]
fn golay_pair_round_trip() {
    let mut len = 0usize;
    assert_eq!(unsafe { cdw_golay_pair(8, ptr::null_mut(), ptr::null_mut(), 0, &mut len) }, CdwStatus::Ok);
    assert_eq!(len, 8);
    let (mut a, mut b) = (vec![0i8; 8], vec![0i8; 8]);
    assert_eq!(unsafe { cdw_golay_pair(8, a.as_mut_ptr(), b.as_mut_ptr(), 8, &mut len) }, CdwStatus::Ok);
    for lag in 0..8 {
        let s: i32 = (0..8 - lag).map(|i| (a[i] * a[i + lag] + b[i] * b[i + lag]) as i32).sum();
        assert_eq!(s, if lag == 0 { 16 } else { 0 });
    }
    let mut small = [0i8; 4];
    assert_eq!(
        unsafe { cdw_golay_pair(8, small.as_mut_ptr(), ptr::null_mut(), 4, ptr::null_mut()) },
        CdwStatus::BufferTooSmall
    );
    assert_eq!(unsafe { cdw_golay_pair(7, ptr::null_mut(), ptr::null_mut(), 0, &mut len) }, CdwStatus::InvalidArgument);
}

#[test]
fn run_exposes_image_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(SMALL);
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { cdw_run(cfg, out.as_ptr(), &mut run) }, CdwStatus::Ok, "{}", last_error());

    let (mut na, mut nr) = (0usize, 0usize);
    assert_eq!(unsafe { cdw_run_envelope_dims(run, &mut na, &mut nr) }, CdwStatus::Ok);
    let mut env = vec![0.0; na * nr];
    let mut len = 0;
    assert_eq!(unsafe { cdw_run_envelope(run, env.as_mut_ptr(), env.len(), &mut len) }, CdwStatus::Ok);
    assert_eq!(len, na * nr);
    assert!(env.iter().all(|v| v.is_finite() && *v >= 0.0));
    let (mut angles, mut ranges) = (vec![0.0; na], vec![0.0; nr]);
    assert_eq!(unsafe { cdw_run_axes(run, angles.as_mut_ptr(), na, ranges.as_mut_ptr(), nr) }, CdwStatus::Ok);
    assert!(angles[0] < 0.0 && ranges[nr - 1] <= 12e-3 + 1e-9);

    let (mut w, mut h) = (0, 0);
    assert_eq!(unsafe { cdw_run_bmode_dims(run, &mut w, &mut h) }, CdwStatus::Ok);
    let mut gray = vec![0u8; w * h];
    assert_eq!(unsafe { cdw_run_bmode(run, gray.as_mut_ptr(), gray.len(), &mut len) }, CdwStatus::Ok);
    assert!(gray.iter().any(|&g| g > 0));

    let mut n = 0;
    assert_eq!(unsafe { cdw_run_signal_strength(run, ptr::null_mut(), 0, &mut n) }, CdwStatus::Ok);
    assert_eq!(n, 2);
    let mut d = 0.0;
    let st = unsafe { cdw_run_penetration_depth(run, &mut d) };
    assert!(st == CdwStatus::Ok || st == CdwStatus::NotAvailable);
    assert!(dir.path().join("manifest.txt").exists());
    unsafe {
        cdw_run_free(run);
        cdw_config_free(cfg);
    }
}

#[test]
fn header_declares_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cdw.h")).unwrap();
    for name in ["cdw_config_from_str", "cdw_run", "cdw_run_free", "cdw_last_error_message", "CDW_STATUS_OK"] {
        assert!(h.contains(name), "{name}");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = std::process::Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler, header compile check not run");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include <stdio.h>\n#include \"cdw.h\"\nint main(void) {\n  CdwConfig *cfg = NULL; CdwRun *run = NULL;\n\
  if (cdw_config_from_str(\"\", &cfg) != CDW_STATUS_OK) { puts(cdw_last_error_message()); return 1; }\n\
  size_t w = 0, h = 0; (void)cdw_run_bmode_dims(run, &w, &h);\n  cdw_run_free(run); cdw_config_free(cfg);\n  return 0;\n}\n",
    )
    .unwrap();
    let out = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
