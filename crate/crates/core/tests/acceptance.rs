//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cdw_core::acoustics::{make_speckle_phantom, plane_reflector_echo, Medium, Phantom, RFFrame, Rect, Scatterer};
use cdw_core::beamform::{das_sta_events, das_virtual_source, envelope, PolarGrid, VirtualSource};
use cdw_core::codes::{bpsk_modulate, golay_pair, Excitation};
use cdw_core::config::parse_config_str;
use cdw_core::metrics::snr_plus_one_db;
use cdw_core::optimize::{sweep_rv, table1_scenarios, table1_trends, SweepConfig};
use cdw_core::pipeline::{Imager, SchemeParams, System};
use cdw_core::receiver::{
    build_reference_bank, extract_reference, golay_combine, matched_filter, ExtractedReference, MFOutput, ReferenceBank,
};
use cdw_core::run::run_pipeline;
use cdw_core::txprofiles::{frame_rate, sector_angle, ArrayGeometry};

fn report(n: u32, ok: bool, detail: impl AsRef<str>) {
    println!("criterion {n}: {} {}", if ok { "PASS" } else { "FAIL" }, detail.as_ref());
    assert!(ok, "criterion {n} failed: {}", detail.as_ref());
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[test]
fn criterion_01_golay_complementarity() {
    let t = Instant::now();
    let mut bad = Vec::new();
    for n in [2usize, 4, 8, 10, 16] {
        let p = golay_pair(n).unwrap();
        let (a, b) = (p.seq_a(), p.seq_b());
        for lag in 0..n {
            let s: i64 = (0..n - lag)
                .map(|i| i64::from(a[i]) * i64::from(a[i + lag]) + i64::from(b[i]) * i64::from(b[i + lag]))
                .sum();
            let want = if lag == 0 { 2 * n as i64 } else { 0 };
            if s != want {
                bad.push(format!("N={n} lag={lag}: {s}"));
            }
        }
    }
    let el = t.elapsed();
    report(1, bad.is_empty() && el < Duration::from_secs(1), format!("lengths 2,4,8,10,16 in {el:?} {bad:?}"));
}

/// `R(m) = Σ_k y(m+k) s_r(k)`, reference chosen by the depth of sample `m`.
fn oracle_mf(frame: &RFFrame, bank: &ReferenceBank, c: f64) -> Vec<f64> {
    let n = frame.n_samples();
    let mut out = Vec::with_capacity(frame.samples().len());
    for ch in 0..frame.n_elements() {
        let y = frame.channel(ch);
        for m in 0..n {
            let depth = (frame.t0 + m as f64 / frame.sample_rate) * c / 2.0;
            let r = ((depth / 5e-3).floor().max(0.0) as usize + 1).min(12);
            let s = bank.reference(r);
            let mut acc = 0.0;
            for k in 0..s.len() {
                if m + k < n {
                    acc += y[m + k] * s[k];
                }
            }
            out.push(acc);
        }
    }
    out
}

#[test]
fn criterion_02_matched_filter_oracle() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let fs = 80e6;
    let c = 1450.0;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let ch = rng.random_range(1..=4);
        let n = rng.random_range(1..=64);
        let k = rng.random_range(1..=24);
        let base = ExtractedReference {
            samples: (0..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
            onset: 0.0,
            sample_rate: fs,
            seq: cdw_core::receiver::CodeSeq::A,
            chips: rng.random_range(1..=16),
        };
        let bank = build_reference_bank(&base, &Medium::default()).unwrap();
        // Start anywhere in 0-70 mm so every depth bin is exercised.
        let t0 = rng.random_range(0.0..70e-3) * 2.0 / c;
        let y: Vec<f64> = (0..ch * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let frame = RFFrame::from_samples(ch, n, y, fs, t0).unwrap();
        let got = matched_filter(&frame, &bank, c).unwrap();
        let want = oracle_mf(&frame, &bank, c);
        let scale = want.iter().map(|v| v.abs()).fold(1e-300, f64::max);
        for (a, b) in got.samples().iter().zip(&want) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    let el = t.elapsed();
    report(2, worst <= 1e-12 && el < Duration::from_secs(10), format!("max rel err {worst:.2e} in {el:?}"));
}

#[test]
fn criterion_03_range_lobe_cancellation() {
    let pair = golay_pair(4).unwrap();
    let exc = bpsk_modulate(&pair, 7.5e6, 2, 80e6).unwrap();
    let chip = exc.chip_len();
    let (delay, n) = (150, 700);
    let mf = |w: &[f64]| {
        let mut y = vec![0.0; n];
        y[delay..delay + w.len()].copy_from_slice(w);
        let frame = RFFrame::from_samples(1, n, y, 80e6, 0.0).unwrap();
        matched_filter(&frame, &ReferenceBank::single(w.to_vec(), 80e6).unwrap(), 1450.0).unwrap()
    };
    let (a, b) = (mf(&exc.waveform_a), mf(&exc.waveform_b));
    let sum = golay_combine(&a, &b).unwrap();
    let off = |x: &[f64]| {
        x.iter()
            .enumerate()
            .filter(|(m, _)| m.abs_diff(delay) >= chip)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max)
    };
    let peak = |x: &[f64]| x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let combined = off(sum.channel(0)) / peak(sum.channel(0));
    let single_a = off(a.channel(0)) / peak(a.channel(0));
    let single_b = off(b.channel(0)) / peak(b.channel(0));
    report(
        3,
        combined < 1e-6 && single_a >= 0.2 && single_b >= 0.2,
        format!("combined {combined:.1e}, single A {single_a:.3}, B {single_b:.3}"),
    );
}

/// Mean power of correlator outputs over samples at 10-25 mm depth.
fn window_power(outs: &[MFOutput], c: f64) -> f64 {
    let (mut s, mut k) = (0.0, 0usize);
    for o in outs {
        for ch in 0..o.n_elements() {
            for (m, v) in o.channel(ch).iter().enumerate() {
                let d = o.time_of(m) * c / 2.0;
                if (10e-3..25e-3).contains(&d) {
                    s += v * v;
                    k += 1;
                }
            }
        }
    }
    s / k as f64
}

#[test]
fn criterion_04_code_length_scaling() {
    let t = Instant::now();
    let system = System {
        geometry: ArrayGeometry::new(32, 0.1e-3).unwrap(),
        ..System::default()
    };
    let c = system.medium.sound_speed;
    let region = Rect {
        x_min: -8e-3,
        x_max: 8e-3,
        z_min: 3e-3,
        z_max: 30e-3,
    };
    let phantom = make_speckle_phantom(region, 4.0, &[], 4, system.medium).unwrap();
    let scheme = SchemeParams::Dw { r_v: 3e-3 };
    let realizations = 4;
    let mut rows = Vec::new();
    let mut sigma2 = None;
    for bits in [2usize, 4, 8] {
        let im = Imager::new(system.clone(), bits, 30e-3).unwrap();
        let clean = im.simulate(&scheme, &phantom, 0.0, 0).unwrap();
        // RF-level noise 10 dB under the 2-bit echo level.
        let s2 = *sigma2.get_or_insert_with(|| {
            let p: f64 = clean.iter().flat_map(|f| f.samples()).map(|v| v * v).sum::<f64>()
                / clean.iter().map(|f| f.samples().len()).sum::<usize>() as f64;
            p / 10.0
        });
        let speckle = window_power(&im.correlate(&clean).unwrap(), c);
        let noise_outs: Vec<MFOutput> = (0..realizations)
            .flat_map(|k| im.correlate(&im.noise_frames(&scheme, s2, 100 + k).unwrap()).unwrap())
            .collect();
        let noise = window_power(&noise_outs, c);
        rows.push((bits, speckle, noise, snr_plus_one_db(speckle, noise).unwrap()));
    }
    let mut ok = true;
    let mut detail = String::new();
    for w in rows.windows(2) {
        let (ds, dn, dsnr) = (db(w[1].1 / w[0].1), db(w[1].2 / w[0].2), w[1].3 - w[0].3);
        ok &= (ds - 6.0).abs() <= 1.0 && (dn - 3.0).abs() <= 0.5 && (dsnr - 3.0).abs() <= 1.0;
        detail.push_str(&format!(
            "{}->{} bits: speckle {ds:+.2} dB, noise {dn:+.2} dB, SNR+1 {dsnr:+.2} dB; ",
            w[0].0, w[1].0
        ));
    }
    report(4, ok, format!("{detail}({:.0?})", t.elapsed()));
}

#[test]
fn criterion_05_attenuation_compensation() {
    let system = System::default();
    let medium = Medium {
        attenuation: 0.5,
        ..system.medium
    };
    let exc = system.excitation(8).unwrap();
    let response = system.response().unwrap();
    let fs = system.sample_rate;
    let c = medium.sound_speed;
    let refs = extract_reference(&exc, &system.geometry, &response, &medium).unwrap();
    let banks: Vec<ReferenceBank> = refs.iter().map(|r| build_reference_bank(r, &medium).unwrap()).collect();
    let depth = 30e-3;
    let n = ((2.0 * depth / c) * fs) as usize + 600;
    let echoes: Vec<RFFrame> = exc
        .waveforms()
        .iter()
        .map(|w| RFFrame::from_samples(1, n, plane_reflector_echo(w, &response, depth, &medium, n), fs, 0.0).unwrap())
        .collect();
    let combined = |banks: &[ReferenceBank]| {
        let a = matched_filter(&echoes[0], &banks[0], c).unwrap();
        let b = matched_filter(&echoes[1], &banks[1], c).unwrap();
        golay_combine(&a, &b).unwrap().channel(0).to_vec()
    };
    let comp = combined(&banks);
    let unc = combined(&banks.iter().map(|b| b.uncompensated()).collect::<Vec<_>>());
    // Main lobe: within one single-chip echo length of the peak.
    let single = extract_reference(&Excitation::new(1, 7.5e6, 2, fs).unwrap(), &system.geometry, &response, &medium).unwrap();
    let half = single[0].samples.len();
    let stats = |x: &[f64]| {
        let env = cdw_core::dsp::analytic_envelope(x);
        let (k, p) = env.iter().enumerate().fold((0, 0.0), |a, (k, &v)| if v > a.1 { (k, v) } else { a });
        let lobes: f64 = x.iter().enumerate().filter(|(m, _)| m.abs_diff(k) >= half).map(|(_, v)| v * v).sum();
        (p, lobes)
    };
    let (pc, lc) = stats(&comp);
    let (pu, lu) = stats(&unc);
    let gain = 20.0 * (pc / pu).log10();
    let lobe_drop = db(lu / lc);
    report(
        5,
        pc > pu && lc < lu && gain >= 1.0,
        format!("peak gain {gain:.2} dB (target >= 1 dB), range-lobe energy {lobe_drop:.2} dB lower"),
    );
}

#[test]
fn criterion_06_sector_geometry_and_frame_rate() {
    let a = sector_angle(14e-3, 12.8e-3).unwrap();
    let rates = [(2, 5000.0), (128, 78.1), (181, 55.2)];
    let mut ok = (a - 49.1).abs() <= 0.05;
    let mut detail = format!("sector {a:.3} deg;");
    for (n, want) in rates {
        let f = frame_rate(n, 75e-3, 1500.0).unwrap();
        ok &= ((f - want) / want).abs() <= 1e-3;
        detail.push_str(&format!(" {n} tx {f:.2} fps;"));
    }
    report(6, ok, detail);
}

#[test]
fn criterion_07_snr_plus_one_anchors() {
    let eq = snr_plus_one_db(2.5, 2.5).unwrap();
    let zero = snr_plus_one_db(0.0, 1.7).unwrap();
    report(7, (eq - 3.01).abs() <= 0.01 && zero == 0.0, format!("equal {eq:.4} dB, zero speckle {zero} dB"));
}

#[test]
fn criterion_08_virtual_source_trends() {
    let t = Instant::now();
    let candidates: Vec<f64> = (0..=116).map(|k| (1.0 + 0.25 * k as f64) * 1e-3).collect();
    let cfg = SweepConfig::default();
    let results: Vec<_> = table1_scenarios(128)
        .into_iter()
        .map(|sc| {
            let r = sweep_rv(&candidates, &sc, &cfg).unwrap();
            (sc, r)
        })
        .collect();
    let rep = table1_trends(&results).unwrap();
    let el = t.elapsed();
    print!("{}", rep.to_text());
    report(
        8,
        rep.all_hold() && el < Duration::from_secs(30 * 60),
        format!("six scenarios, 117 candidates each, in {:.0} s", el.as_secs_f64()),
    );
}

#[test]
fn criterion_09_point_target() {
    let system = System::default();
    let c = system.medium.sound_speed;
    let target = (0.0, 30e-3);
    let phantom = Phantom::new(vec![Scatterer { x: target.0, z: target.1, reflectivity: 1.0 }], system.medium, "point").unwrap();
    let im = Imager::new(system.clone(), 2, 35e-3).unwrap();
    let sector = PolarGrid::default_sector(35e-3, c, system.sample_rate).unwrap();
    let mut ok = true;
    let mut detail = String::new();
    for scheme in [SchemeParams::Dw { r_v: 10.5e-3 }, SchemeParams::Sta, SchemeParams::csf_default()] {
        let s = im.stream(&scheme, Some(&phantom), 0.0, 9, &sector, false, |_, _, _| Ok(())).unwrap();
        let env = envelope(&s.lines);
        let (ia, ir) = env.argmax();
        let (fa, fr) = env.grid.locate(target.0, target.1).unwrap();
        let hit = (ia as f64 - fa).abs() <= 1.0 && (ir as f64 - fr).abs() <= 1.0;
        ok &= hit;
        detail.push_str(&format!(
            "{}: peak ({:.1} deg, {:.3} mm) ; ",
            scheme.scheme().name(),
            env.grid.angles_deg()[ia],
            env.grid.ranges()[ir] * 1e3
        ));
    }
    // One STA event equals a virtual source on that element.
    let geom = &system.geometry;
    let j = 40;
    let frame = RFFrame::from_samples(
        geom.n_elements(),
        400,
        (0..geom.n_elements() * 400).map(|k| ((k * 7919) % 211) as f64 / 105.0 - 1.0).collect(),
        system.sample_rate,
        20e-6,
    )
    .unwrap();
    let mf = MFOutput::from_frame(frame);
    let grid = PolarGrid::uniform(-30.0, 30.0, 1.0, 14.5e-3, 17.5e-3, 0.05e-3).unwrap();
    let sta = das_sta_events(&[(j, &mf)], &grid, geom, c).unwrap();
    let vs = das_virtual_source(&mf, VirtualSource { x: geom.element_x()[j], z: 0.0 }, &grid, geom, c).unwrap();
    let scale = vs.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
    let diff = sta.data().iter().zip(vs.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
    ok &= diff <= 1e-9;
    detail.push_str(&format!("single-event STA vs virtual source rel diff {diff:.1e}"));
    report(9, ok, detail);
}

#[test]
fn criterion_10_determinism() {
    let text = "[array]\nelements = 32\n[scheme]\nkind = dw\nrv_mm = 3\n[excitation]\ncode_bits = 4\n\
[phantom]\nkind = speckle\nx_min_mm = -5\nx_max_mm = 5\nz_min_mm = 5\nz_max_mm = 15\ndensity_per_mm2 = 2\n\
cysts = 0,10,3\nseed = 11\n[run]\nmax_depth_mm = 16\nnoise_power = 1e-4\nnoise_realizations = 3\nseed = 5\n\
save_rf = true\nsave_mf = true\n";
    let cfg = parse_config_str(text, &[]).unwrap();
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let m1 = run_pipeline(&cfg, Some(d1.path())).unwrap().manifest;
    let m2 = run_pipeline(&cfg, Some(d2.path())).unwrap().manifest;
    let on_disk = std::fs::read(d1.path().join("manifest.txt")).unwrap() == std::fs::read(d2.path().join("manifest.txt")).unwrap();
    report(
        10,
        m1 == m2 && on_disk && m1.lines().count() > 5,
        format!("{} manifest entries identical: {}", m1.lines().count(), m1 == m2 && on_disk),
    );
}
