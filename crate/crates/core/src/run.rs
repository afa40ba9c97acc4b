//! End-to-end experiment: simulate, beamform, measure and write artifacts.

use std::path::Path;

use crate::beamform::{envelope, ImageMeta, SectorImage, Scanlines};
use crate::config::{ExperimentConfig, PhantomSpec};
use crate::error::Result;
use crate::io::{self, ArtifactWriter};
use crate::metrics::{self, DepthCurve, RoiSpec};
use crate::pipeline::{frame_seed, Imager, SchemeParams};

/// Seed stream for noise-only realizations, disjoint from the acquisition stream.
const NOISE_STREAM: u64 = 0x6e6f_6973_655f_7265;

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub image: SectorImage,
    /// Noise-free envelope, formed only when noise is simulated.
    pub clean_envelope: Option<Scanlines>,
    pub pins: Vec<(f64, f64)>,
    pub signal_strength_db: Vec<f64>,
    /// `(pin index, SSR)` for pins whose annulus fits in the sector.
    pub ssr_db: Vec<(usize, f64)>,
    pub noise: Option<DepthCurve>,
    pub snr_plus_one: Option<DepthCurve>,
    pub penetration_depth: Option<f64>,
    /// `(cyst index, CNR)`.
    pub cnr: Vec<(usize, f64)>,
    pub manifest: String,
}

pub fn build_imager(cfg: &ExperimentConfig) -> Result<Imager> {
    let im = Imager::new(cfg.system.clone(), cfg.code_bits, cfg.max_depth)?;
    Ok(if cfg.compensate { im } else { im.without_compensation() })
}

pub fn image_meta(cfg: &ExperimentConfig) -> ImageMeta {
    ImageMeta {
        scheme: cfg.scheme.scheme(),
        code_bits: cfg.code_bits,
        r_v: match cfg.scheme {
            SchemeParams::Dw { r_v } => Some(r_v),
            _ => None,
        },
    }
}

/// Envelopes of `n` noise-only acquisitions with distinct seeds.
pub fn noise_envelopes(imager: &Imager, cfg: &ExperimentConfig, n: usize) -> Result<Vec<Scanlines>> {
    let grid = cfg.grid()?;
    (0..n)
        .map(|k| {
            let seed = frame_seed(cfg.seed ^ NOISE_STREAM, k);
            let s = imager.stream(&cfg.scheme, None, cfg.noise_power, seed, &grid, false, |_, _, _| Ok(()))?;
            Ok(envelope(&s.lines))
        })
        .collect()
}

/// Cyst ROI at 80 % of the cyst diameter and an equal disc of background
/// beside it, on whichever side stays in the sector.
fn cyst_rois(img: &SectorImage, cyst: &crate::acoustics::Cyst) -> Option<(RoiSpec, RoiSpec)> {
    let d = 0.8 * cyst.diameter;
    let inner = RoiSpec::Disc { x: cyst.x, z: cyst.z, diameter: d };
    inner.pixels(&img.cartesian).ok()?;
    let toward_axis = if cyst.x > 0.0 { -1.0 } else { 1.0 };
    [toward_axis, -toward_axis].into_iter().find_map(|side| {
        let bg = RoiSpec::Disc {
            x: cyst.x + side * 1.5 * cyst.diameter,
            z: cyst.z,
            diameter: d,
        };
        bg.pixels(&img.cartesian).ok().map(|_| (inner, bg))
    })
}

/// Envelope, log-compressed polar image and the scan-converted B-mode.
pub fn write_image(w: &mut ArtifactWriter, image: &SectorImage) -> Result<()> {
    w.write("image/envelope.cdwimg", &io::image_to_bytes(&image.envelope))?;
    w.write("image/compressed.cdwimg", &io::image_to_bytes(&image.compressed.db))?;
    w.write("image/bmode.pgm", &io::cartesian_to_pgm(&image.cartesian, crate::beamform::DYNAMIC_RANGE_DB)?)?;
    Ok(())
}

/// Runs `cfg` and writes every artifact under `out` (or the configured directory).
pub fn run_pipeline(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunOutput> {
    let imager = build_imager(cfg)?;
    let phantom = cfg.phantom.build(cfg.system.medium)?;
    let grid = cfg.grid()?;
    let mut w = ArtifactWriter::new(out.unwrap_or(&cfg.out_dir))?;
    let per = imager.excitation.transmissions();
    let save_mf = cfg.save_mf && imager.uses_correlator(&cfg.scheme);
    let noisy = cfg.noise_power > 0.0;

    let streamed = imager.stream(&cfg.scheme, Some(&phantom), cfg.noise_power, cfg.seed, &grid, noisy, |e, frames, data| {
        if cfg.save_rf {
            for (s, f) in frames.iter().enumerate() {
                w.write(&format!("rf/frame_{:04}.cdwrf", e * per + s), &io::rf_to_bytes(f))?;
            }
        }
        if save_mf {
            w.write(&format!("mf/event_{e:04}.cdwrf"), &io::rf_to_bytes(data))?;
        }
        Ok(())
    })?;
    let image = SectorImage::from_envelope(envelope(&streamed.lines), image_meta(cfg), cfg.pixel)?;
    let clean_envelope = streamed.clean_lines.as_ref().map(envelope);

    write_image(&mut w, &image)?;

    // Pins beyond the imaged sector are skipped.
    let pins: Vec<(f64, f64)> = cfg
        .pins()
        .into_iter()
        .filter(|&(x, z)| metrics::pin_peak_db(&image.envelope, x, z).is_ok())
        .collect();
    let signal_strength_db = metrics::signal_strength_profile(&image.envelope, &pins)?;
    // SSR needs the whole annulus inside the sector.
    let ssr_db: Vec<(usize, f64)> = pins
        .iter()
        .enumerate()
        .filter_map(|(k, &p)| metrics::ssr(&image.envelope, p).ok().map(|v| (k, v)))
        .collect();
    if !pins.is_empty() {
        w.write("metrics/signal_strength.csv", io::profile_csv(&pins, &signal_strength_db).as_bytes())?;
    }
    if !ssr_db.is_empty() {
        let at: Vec<(f64, f64)> = ssr_db.iter().map(|&(k, _)| pins[k]).collect();
        let v: Vec<f64> = ssr_db.iter().map(|&(_, v)| v).collect();
        w.write("metrics/ssr.csv", io::profile_csv(&at, &v).as_bytes())?;
    }

    let (mut noise, mut snr, mut penetration) = (None, None, None);
    if let Some(clean) = &clean_envelope {
        let envs = noise_envelopes(&imager, cfg, cfg.noise_realizations.max(1))?;
        let curve = metrics::noise_power(&envs.iter().collect::<Vec<_>>())?;
        let s = metrics::snr_plus_one(clean, &curve)?;
        w.write("metrics/noise_power.csv", io::depth_curve_csv(&curve).as_bytes())?;
        w.write("metrics/snr_plus_one.csv", io::depth_curve_csv(&s).as_bytes())?;
        penetration = metrics::penetration_depth(&s);
        noise = Some(curve);
        snr = Some(s);
    }

    let mut cnr = Vec::new();
    if let PhantomSpec::Speckle { cysts, .. } = &cfg.phantom {
        for (k, cyst) in cysts.iter().enumerate() {
            if let Some((inner, bg)) = cyst_rois(&image, cyst) {
                cnr.push((k, metrics::cnr(&image.cartesian, &inner, &bg)?));
            }
        }
    }

    let mut summary = format!(
        "scheme = {}\ncode_bits = {}\nevents = {}\nlog_offset_db = {}\n",
        cfg.scheme.scheme().name(),
        cfg.code_bits,
        imager.frame_count(&cfg.scheme) / per,
        image.compressed.offset_db
    );
    if let SchemeParams::Dw { r_v } = cfg.scheme {
        summary.push_str(&format!("rv_mm = {}\n", r_v * 1e3));
    }
    match (penetration, noisy) {
        (Some(p), _) => summary.push_str(&format!("penetration_depth_mm = {}\n", p * 1e3)),
        (None, true) => summary.push_str("penetration_depth_mm = none\n"),
        _ => {}
    }
    for (k, c) in &cnr {
        summary.push_str(&format!("cnr_cyst{k} = {c}\n"));
    }
    w.write("metrics/summary.txt", summary.as_bytes())?;
    let manifest = w.finish()?;

    Ok(RunOutput {
        image,
        clean_envelope,
        pins,
        signal_strength_db,
        ssr_db,
        noise,
        snr_plus_one: snr,
        penetration_depth: penetration,
        cnr,
        manifest,
    })
}
