use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cdw_core::beamform::{envelope, SectorImage};
use cdw_core::config::{parse_config_str, ExperimentConfig};
use cdw_core::io::{self, ArtifactWriter};
use cdw_core::optimize::{sweep_rv, table1_scenarios, table1_trends, SweepConfig, SweepResult};
use cdw_core::run::{build_imager, image_meta, run_pipeline, write_image};
use cdw_core::{metrics, Error, Result};

#[derive(Parser)]
#[command(name = "cdw", version, about = "Coded diverging-wave ultrasound simulation and imaging")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate, beamform and measure; writes RF, images, metrics and a manifest.
    Run(Common),
    /// Simulate RF frames only.
    Simulate(Common),
    /// Beamform RF frames written by `simulate` or `run`.
    Beamform {
        #[command(flatten)]
        common: Common,
        /// Directory holding rf/frame_NNNN.cdwrf.
        #[arg(long)]
        input: PathBuf,
    },
    /// Pin signal strength and SSR of a stored envelope image.
    Metrics {
        #[command(flatten)]
        common: Common,
        /// Directory holding image/envelope.cdwimg.
        #[arg(long)]
        input: PathBuf,
    },
    /// Sweep the DW virtual source distance for the six aperture/sector scenarios.
    Optimize {
        #[arg(long, default_value = "cdw_optimize")]
        out: PathBuf,
        /// Elements of the large aperture; the small one has half.
        #[arg(long, default_value_t = 128)]
        large: usize,
        #[arg(long, default_value_t = 1.0)]
        rv_min_mm: f64,
        #[arg(long, default_value_t = 30.0)]
        rv_max_mm: f64,
        #[arg(long, default_value_t = 0.25)]
        rv_step_mm: f64,
    },
    /// Convert a stored envelope image to an 8-bit PGM B-mode.
    Render {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        pixel_mm: f64,
    },
    /// Compare two metric CSV files on their last column.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Exit with status 1 when any difference exceeds this.
        #[arg(long)]
        tolerance: Option<f64>,
    },
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// dw, sta or csf.
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    code_bits: Option<usize>,
    /// DW virtual source distance in mm.
    #[arg(long)]
    rv: Option<f64>,
    /// Any config key, as section.key=value.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let text = match &self.config {
            Some(p) => io::read_text(p)?,
            None => String::new(),
        };
        let mut ov: Vec<(String, String, String)> = Vec::new();
        if let Some(s) = self.seed {
            ov.push(("run".into(), "seed".into(), s.to_string()));
        }
        if let Some(s) = &self.scheme {
            ov.push(("scheme".into(), "kind".into(), s.clone()));
        }
        if let Some(b) = self.code_bits {
            ov.push(("excitation".into(), "code_bits".into(), b.to_string()));
        }
        if let Some(r) = self.rv {
            ov.push(("scheme".into(), "rv_mm".into(), r.to_string()));
        }
        if let Some(o) = &self.out {
            ov.push(("run".into(), "out".into(), o.display().to_string()));
        }
        for s in &self.sets {
            let bad = || Error::Config(vec![format!("--set '{s}': expected section.key=value")]);
            let (k, v) = s.split_once('=').ok_or_else(bad)?;
            let (sec, key) = k.split_once('.').ok_or_else(bad)?;
            ov.push((sec.trim().into(), key.trim().into(), v.trim().into()));
        }
        let refs: Vec<(&str, &str, String)> = ov.iter().map(|(a, b, c)| (a.as_str(), b.as_str(), c.clone())).collect();
        parse_config_str(&text, &refs)
    }
}

fn simulate(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let imager = build_imager(&cfg)?;
    let phantom = cfg.phantom.build(cfg.system.medium)?;
    let per = imager.excitation.transmissions();
    let mut w = ArtifactWriter::new(&cfg.out_dir)?;
    imager.simulate_each(&cfg.scheme, &phantom, cfg.noise_power, cfg.seed, |e, frames| {
        for (s, f) in frames.iter().enumerate() {
            w.write(&format!("rf/frame_{:04}.cdwrf", e * per + s), &io::rf_to_bytes(f))?;
        }
        Ok(())
    })?;
    w.finish()?;
    println!("{} frames written to {}", imager.frame_count(&cfg.scheme), cfg.out_dir.display());
    Ok(())
}

fn rf_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rf = dir.join("rf");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&rf)
        .map_err(|e| Error::io(&rf, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cdwrf"))
        .collect();
    files.sort();
    Ok(files)
}

fn beamform(c: &Common, input: &Path) -> Result<()> {
    let cfg = c.load()?;
    let imager = build_imager(&cfg)?;
    let frames = rf_files(input)?
        .iter()
        .map(|p| io::rf_from_bytes(&io::read_file(p)?))
        .collect::<Result<Vec<_>>>()?;
    let lines = imager.beamform(&cfg.scheme, &frames, &cfg.grid()?)?;
    let image = SectorImage::from_envelope(envelope(&lines), image_meta(&cfg), cfg.pixel)?;
    let mut w = ArtifactWriter::new(&cfg.out_dir)?;
    write_image(&mut w, &image)?;
    w.finish()?;
    println!("image written to {}", cfg.out_dir.display());
    Ok(())
}

fn measure(c: &Common, input: &Path) -> Result<()> {
    let cfg = c.load()?;
    let env = io::image_from_bytes(&io::read_file(&input.join("image/envelope.cdwimg"))?)?;
    let pins: Vec<(f64, f64)> = cfg
        .pins()
        .into_iter()
        .filter(|&(x, z)| metrics::pin_peak_db(&env, x, z).is_ok())
        .collect();
    let strength = metrics::signal_strength_profile(&env, &pins)?;
    let (ssr_pins, ssr): (Vec<(f64, f64)>, Vec<f64>) = pins
        .iter()
        .filter_map(|&p| metrics::ssr(&env, p).ok().map(|v| (p, v)))
        .unzip();
    let mut w = ArtifactWriter::new(&cfg.out_dir)?;
    w.write("metrics/signal_strength.csv", io::profile_csv(&pins, &strength).as_bytes())?;
    w.write("metrics/ssr.csv", io::profile_csv(&ssr_pins, &ssr).as_bytes())?;
    w.finish()?;
    print!("{}", io::profile_csv(&pins, &strength));
    Ok(())
}

fn sweep_csv(r: &SweepResult) -> String {
    let mut s = String::from("rv_mm,objective,central_diff_db\n");
    for ((rv, obj), prof) in r.r_v_candidates.iter().zip(&r.objective).zip(&r.dw_profiles) {
        s.push_str(&format!("{},{obj},{}\n", rv * 1e3, prof[r.central] - r.sta_profile[r.central]));
    }
    s
}

fn optimize(out: &Path, large: usize, lo: f64, hi: f64, step: f64) -> Result<()> {
    if !(step > 0.0 && lo > 0.0 && hi >= lo) {
        return Err(Error::Config(vec!["sweep needs 0 < rv_min <= rv_max and a positive step".into()]));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let candidates: Vec<f64> = (0..=n).map(|k| (lo + k as f64 * step) * 1e-3).collect();
    let cfg = SweepConfig::default();
    let mut w = ArtifactWriter::new(out)?;
    let mut results = Vec::new();
    for sc in table1_scenarios(large) {
        let r = sweep_rv(&candidates, &sc, &cfg)?;
        println!("{}: r_v = {:.2} mm", sc.name, r.best_r_v * 1e3);
        let pins = sc.all_pins();
        w.write(&format!("{}/sweep.csv", sc.name), sweep_csv(&r).as_bytes())?;
        w.write(&format!("{}/sta_profile.csv", sc.name), io::profile_csv(&pins, &r.sta_profile).as_bytes())?;
        for (rv, prof) in r.r_v_candidates.iter().zip(&r.dw_profiles) {
            let name = format!("{}/profiles/rv_{:07.3}mm.csv", sc.name, rv * 1e3);
            w.write(&name, io::profile_csv(&pins, prof).as_bytes())?;
        }
        results.push((sc, r));
    }
    let report = table1_trends(&results)?.to_text();
    w.write("trends.txt", report.as_bytes())?;
    w.finish()?;
    print!("{report}");
    Ok(())
}

fn render(input: &Path, output: &Path, pixel_mm: f64) -> Result<()> {
    let env = io::image_from_bytes(&io::read_file(input)?)?;
    let meta = cdw_core::beamform::ImageMeta {
        scheme: cdw_core::beamform::Scheme::Csf,
        code_bits: 1,
        r_v: None,
    };
    let img = SectorImage::from_envelope(env, meta, pixel_mm * 1e-3)?;
    io::write_file(output, &io::cartesian_to_pgm(&img.cartesian, cdw_core::beamform::DYNAMIC_RANGE_DB)?)
}

fn compare(a: &Path, b: &Path, tol: Option<f64>) -> Result<bool> {
    let ta = io::parse_metric_csv(&io::read_text(a)?)?;
    let tb = io::parse_metric_csv(&io::read_text(b)?)?;
    let report = io::compare_tables(&ta, &tb)?;
    print!("{report}");
    let worst: f64 = report
        .lines()
        .last()
        .and_then(|l| l.strip_prefix("max_abs_diff,"))
        .and_then(|v| v.parse().ok())
        .unwrap_or(f64::INFINITY);
    Ok(tol.is_none_or(|t| worst <= t))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Run(c) => c.load().and_then(|cfg| {
            let out = run_pipeline(&cfg, None)?;
            print!("{}", io::read_text(&cfg.out_dir.join("metrics/summary.txt"))?);
            println!("{} artifacts in {}", out.manifest.lines().count(), cfg.out_dir.display());
            Ok(true)
        }),
        Cmd::Simulate(c) => simulate(c).map(|_| true),
        Cmd::Beamform { common, input } => beamform(common, input).map(|_| true),
        Cmd::Metrics { common, input } => measure(common, input).map(|_| true),
        Cmd::Optimize {
            out,
            large,
            rv_min_mm,
            rv_max_mm,
            rv_step_mm,
        } => optimize(out, *large, *rv_min_mm, *rv_max_mm, *rv_step_mm).map(|_| true),
        Cmd::Render { input, output, pixel_mm } => render(input, output, *pixel_mm).map(|_| true),
        Cmd::Compare { a, b, tolerance } => compare(a, b, *tolerance),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
