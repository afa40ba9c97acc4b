use std::path::Path;
use std::process::{Command, Output};

use cdw_core::io;

const SMALL: &str = "[array]\nelements = 16\n[scheme]\nkind = dw\nrv_mm = 2\n[excitation]\ncode_bits = 2\n\
[phantom]\npreset = vertical_pins\n[run]\nmax_depth_mm = 12\nnoise_power = 1e-6\nnoise_realizations = 2\n";

fn cdw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cdw")).args(args).output().expect("spawn cdw")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write_config(dir: &Path) -> String {
    let p = dir.join("small.cfg");
    std::fs::write(&p, SMALL).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_writes_artifacts_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("run");
    let stdout = ok(&cdw(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "3"]));
    assert!(stdout.contains("scheme = dw"));
    for f in [
        "image/envelope.cdwimg",
        "image/compressed.cdwimg",
        "image/bmode.pgm",
        "metrics/signal_strength.csv",
        "metrics/noise_power.csv",
        "metrics/snr_plus_one.csv",
        "metrics/summary.txt",
        "manifest.txt",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.lines().all(|l| l.len() > 66 && l.as_bytes()[64] == b' '));
}

#[test]
fn simulate_then_beamform_then_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let sim = dir.path().join("sim");
    let bf = dir.path().join("bf");
    let me = dir.path().join("me");
    let s = ok(&cdw(&["simulate", "--config", &cfg, "--out", sim.to_str().unwrap()]));
    assert!(s.starts_with("2 frames"), "{s}");
    assert!(sim.join("rf/frame_0000.cdwrf").is_file() && sim.join("rf/frame_0001.cdwrf").is_file());
    ok(&cdw(&["beamform", "--config", &cfg, "--input", sim.to_str().unwrap(), "--out", bf.to_str().unwrap()]));
    assert!(bf.join("image/bmode.pgm").is_file());
    let m = ok(&cdw(&["metrics", "--config", &cfg, "--input", bf.to_str().unwrap(), "--out", me.to_str().unwrap()]));
    assert!(m.starts_with("pin_index,x_mm,value_db"));
    assert_eq!(m.lines().count(), 3);

    // Same seed through `run` matches simulate + beamform up to f32 storage of the RF.
    let run = dir.path().join("run");
    ok(&cdw(&["run", "--config", &cfg, "--out", run.to_str().unwrap()]));
    let read = |p: &Path| io::image_from_bytes(&std::fs::read(p).unwrap()).unwrap();
    let a = read(&run.join("image/envelope.cdwimg"));
    let b = read(&bf.join("image/envelope.cdwimg"));
    assert_eq!(a.grid, b.grid);
    let peak = a.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (x, y) in a.data().iter().zip(b.data()) {
        assert!((x - y).abs() <= 1e-5 * peak);
    }
}

#[test]
fn render_and_compare() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let run = dir.path().join("run");
    ok(&cdw(&["run", "--config", &cfg, "--out", run.to_str().unwrap()]));
    let pgm = dir.path().join("b.pgm");
    ok(&cdw(&["render", run.join("image/envelope.cdwimg").to_str().unwrap(), pgm.to_str().unwrap()]));
    assert!(std::fs::read(&pgm).unwrap().starts_with(b"P5"));

    let csv = run.join("metrics/signal_strength.csv");
    let same = ok(&cdw(&["compare", csv.to_str().unwrap(), csv.to_str().unwrap(), "--tolerance", "0"]));
    assert!(same.trim_end().ends_with("max_abs_diff,0"));

    let other = dir.path().join("other.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    let shifted: String = text
        .lines()
        .enumerate()
        .map(|(i, l)| {
            if i == 0 {
                format!("{l}\n")
            } else {
                let (head, v) = l.rsplit_once(',').unwrap();
                format!("{head},{}\n", v.parse::<f64>().unwrap() + 0.5)
            }
        })
        .collect();
    std::fs::write(&other, shifted).unwrap();
    let out = cdw(&["compare", csv.to_str().unwrap(), other.to_str().unwrap(), "--tolerance", "0.1"]);
    assert_eq!(out.status.code(), Some(1));
    ok(&cdw(&["compare", csv.to_str().unwrap(), other.to_str().unwrap(), "--tolerance", "0.6"]));
}

#[test]
fn invalid_configuration_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.cfg");
    std::fs::write(&p, "[scheme]\nkind = dw\n[array]\nelements = many\nbogus = 1\n").unwrap();
    let out = cdw(&["run", "--config", p.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("rv_mm") && err.contains("elements") && err.contains("bogus"), "{err}");

    let out = cdw(&["run", "--scheme", "sta", "--rv", "5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cdw(&["run", "--set", "array.nope=1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cdw(&["run", "--code-bits", "3", "--scheme", "dw", "--rv", "5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn optimize_writes_sweeps_and_trends() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("opt");
    let s = ok(&cdw(&[
        "optimize",
        "--out",
        out.to_str().unwrap(),
        "--large",
        "16",
        "--rv-min-mm",
        "1",
        "--rv-max-mm",
        "2",
        "--rv-step-mm",
        "0.5",
    ]));
    assert!(s.contains("r_v increases as sector narrows"));
    let sweep = std::fs::read_to_string(out.join("8lambda_90deg/sweep.csv")).unwrap();
    assert_eq!(sweep.lines().next().unwrap(), "rv_mm,objective,central_diff_db");
    assert_eq!(sweep.lines().count(), 4);
    assert!(out.join("4lambda_30deg/profiles/rv_001.500mm.csv").is_file());
    assert!(out.join("trends.txt").is_file());
}
