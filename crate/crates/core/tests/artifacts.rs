use cdw_core::config::parse_config_str;
use cdw_core::io;
use cdw_core::pipeline::Imager;
use cdw_core::run::run_pipeline;

const CFG: &str = "[array]\nelements = 16\n[scheme]\nkind = sta\n[excitation]\ncode_bits = 2\n\
[phantom]\npreset = vertical_pins\n[run]\nmax_depth_mm = 11\nnoise_power = 1e-6\nnoise_realizations = 2\nseed = 8\n";

#[test]
fn stored_artifacts_match_in_memory_results() {
    let cfg = parse_config_str(CFG, &[]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_pipeline(&cfg, Some(dir.path())).unwrap();

    let env = io::image_from_bytes(&io::read_file(&dir.path().join("image/envelope.cdwimg")).unwrap()).unwrap();
    assert_eq!(env.grid, out.image.envelope.grid);
    for (a, b) in env.data().iter().zip(out.image.envelope.data()) {
        assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-30));
    }

    // 16 events, two waveforms each.
    let im = Imager::new(cfg.system.clone(), 2, cfg.max_depth).unwrap();
    let frames = im.simulate(&cfg.scheme, &cfg.phantom.build(cfg.system.medium).unwrap(), cfg.noise_power, cfg.seed).unwrap();
    assert_eq!(frames.len(), 32);
    for k in [0usize, 7, 31] {
        let f = io::rf_from_bytes(&io::read_file(&dir.path().join(format!("rf/frame_{k:04}.cdwrf"))).unwrap()).unwrap();
        assert_eq!(f.n_samples(), frames[k].n_samples());
        assert_eq!(f.t0, frames[k].t0);
        for (a, b) in f.samples().iter().zip(frames[k].samples()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }
    assert!(dir.path().join("mf/event_0015.cdwrf").is_file());
    assert!(!dir.path().join("mf/event_0016.cdwrf").exists());

    // Manifest lists every file with its hash.
    let manifest = io::read_text(&dir.path().join("manifest.txt")).unwrap();
    for line in manifest.lines() {
        let (hash, rel) = line.split_once("  ").unwrap();
        assert_eq!(hash, io::sha256_hex(&io::read_file(&dir.path().join(rel)).unwrap()));
    }
    assert_eq!(manifest, out.manifest);

    let (w, h, px) = io::pgm_from_bytes(&io::read_file(&dir.path().join("image/bmode.pgm")).unwrap()).unwrap();
    assert_eq!((w, h), (out.image.cartesian.nx, out.image.cartesian.nz));
    assert_eq!(px, out.image.gray());

    let snr = io::parse_metric_csv(&io::read_text(&dir.path().join("metrics/snr_plus_one.csv")).unwrap()).unwrap();
    let curve = out.snr_plus_one.as_ref().unwrap();
    assert_eq!(snr.rows.len(), curve.len());
    for (row, v) in snr.rows.iter().zip(curve.values()) {
        assert!((row[1] - v).abs() < 1e-9);
    }
}

#[test]
fn different_seeds_change_noisy_outputs_only() {
    let a = parse_config_str(CFG, &[]).unwrap();
    let b = parse_config_str(CFG, &[("run", "seed", "9".into())]).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_pipeline(&a, Some(da.path())).unwrap();
    let rb = run_pipeline(&b, Some(db.path())).unwrap();
    assert_ne!(ra.manifest, rb.manifest);
    assert_eq!(ra.clean_envelope, rb.clean_envelope);
}
