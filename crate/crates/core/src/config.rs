//! Experiment configuration: a line-oriented `key = value` file with
//! `[section]` headers. `#` starts a comment. Every key is optional;
//! missing keys take the measurement-system defaults.
//!
//! ```text
//! [array]       elements, pitch_mm
//! [medium]      sound_speed, attenuation_db_mhz_cm
//! [transducer]  center_mhz, bandwidth, sample_rate_mhz
//! [excitation]  code_bits, cycles_per_chip
//! [scheme]      kind = dw | sta | csf, rv_mm (dw), focus_mm, half_sector_deg, step_deg (csf)
//! [receiver]    fixed_gain_db, tgc_db_per_cm, compensate
//! [phantom]     kind = pins | speckle | file, preset, file,
//!               density_per_mm2, x_min_mm, x_max_mm, z_min_mm, z_max_mm,
//!               cysts = "x,z,diameter; ..." (mm), seed
//! [run]         noise_power, seed, noise_realizations, max_depth_mm, out, save_rf, save_mf
//! [image]       angle_step_deg, range_step_mm, pixel_mm
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::acoustics::{make_pin_phantom, make_speckle_phantom, Cyst, Medium, Phantom, Rect, Scatterer};
use crate::beamform::PolarGrid;
use crate::codes::Excitation;
use crate::error::{Error, Result};
use crate::pipeline::{SchemeParams, System};
use crate::txprofiles::{ArrayGeometry, BeamSpec, CSF_FOCUS, CSF_HALF_SECTOR_DEG, CSF_STEP_DEG};

const KEYS: &[(&str, &[&str])] = &[
    ("array", &["elements", "pitch_mm"]),
    ("medium", &["sound_speed", "attenuation_db_mhz_cm"]),
    ("transducer", &["center_mhz", "bandwidth", "sample_rate_mhz"]),
    ("excitation", &["code_bits", "cycles_per_chip"]),
    ("scheme", &["kind", "rv_mm", "focus_mm", "half_sector_deg", "step_deg"]),
    ("receiver", &["fixed_gain_db", "tgc_db_per_cm", "compensate"]),
    (
        "phantom",
        &[
            "kind",
            "preset",
            "file",
            "density_per_mm2",
            "x_min_mm",
            "x_max_mm",
            "z_min_mm",
            "z_max_mm",
            "cysts",
            "seed",
        ],
    ),
    (
        "run",
        &["noise_power", "seed", "noise_realizations", "max_depth_mm", "out", "save_rf", "save_mf"],
    ),
    ("image", &["angle_step_deg", "range_step_mm", "pixel_mm"]),
];

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomSpec {
    Pins { preset: String },
    Speckle {
        region: Rect,
        density_per_mm2: f64,
        cysts: Vec<Cyst>,
        seed: u64,
    },
    /// Text file, one `x_mm z_mm reflectivity` triple per line.
    File { path: PathBuf },
}

impl PhantomSpec {
    pub fn build(&self, medium: Medium) -> Result<Phantom> {
        match self {
            PhantomSpec::Pins { preset } => make_pin_phantom(preset, medium),
            PhantomSpec::Speckle {
                region,
                density_per_mm2,
                cysts,
                seed,
            } => make_speckle_phantom(*region, *density_per_mm2, cysts, *seed, medium),
            PhantomSpec::File { path } => read_phantom_file(path, medium),
        }
    }
}

pub fn read_phantom_file(path: &Path, medium: Medium) -> Result<Phantom> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut s = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format {
                what: "phantom file",
                reason: format!("line {}: {e}", n + 1),
            })?;
        if v.len() != 3 {
            return Err(Error::Format {
                what: "phantom file",
                reason: format!("line {}: expected x_mm z_mm reflectivity", n + 1),
            });
        }
        s.push(Scatterer {
            x: v[0] * 1e-3,
            z: v[1] * 1e-3,
            reflectivity: v[2],
        });
    }
    Phantom::new(s, medium, path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: System,
    pub code_bits: usize,
    pub scheme: SchemeParams,
    pub phantom: PhantomSpec,
    pub compensate: bool,
    /// Variance of the additive receive noise per sample.
    pub noise_power: f64,
    pub seed: u64,
    pub noise_realizations: usize,
    pub max_depth: f64,
    pub out_dir: PathBuf,
    pub save_rf: bool,
    pub save_mf: bool,
    pub angle_step_deg: f64,
    pub range_step: f64,
    pub pixel: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        parse_config_str("", &[]).expect("defaults are valid")
    }
}

impl ExperimentConfig {
    /// Image grid: the CSF plan's angles for CSF, otherwise ±45° at the configured step.
    pub fn grid(&self) -> Result<PolarGrid> {
        let ranges_hi = self.max_depth;
        match &self.scheme {
            SchemeParams::Csf { plan } => {
                let n = ((ranges_hi - self.range_step) / self.range_step + 1e-9).floor() as usize + 1;
                PolarGrid::new(
                    plan.iter().map(|b| b.steer_deg).collect(),
                    (0..n).map(|k| (k + 1) as f64 * self.range_step).collect(),
                )
            }
            _ => PolarGrid::uniform(
                -CSF_HALF_SECTOR_DEG,
                CSF_HALF_SECTOR_DEG,
                self.angle_step_deg,
                self.range_step,
                ranges_hi,
                self.range_step,
            ),
        }
    }

    pub fn pins(&self) -> Vec<(f64, f64)> {
        match &self.phantom {
            PhantomSpec::Pins { preset } => crate::acoustics::pin_positions(preset).unwrap_or_default(),
            _ => Vec::new(),
        }
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, &[])
}

type Table = BTreeMap<(String, String), String>;

fn parse_table(text: &str, errors: &mut Vec<String>) -> Table {
    let mut table = Table::new();
    let mut section = String::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            if !KEYS.iter().any(|(s, _)| *s == section) {
                errors.push(format!("line {}: unknown section [{section}]", n + 1));
            }
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errors.push(format!("line {}: expected key = value", n + 1));
            continue;
        };
        let key = k.trim().to_string();
        let known = KEYS.iter().any(|(s, ks)| *s == section && ks.contains(&key.as_str()));
        if !known {
            if section.is_empty() {
                errors.push(format!("line {}: key '{key}' outside any section", n + 1));
            } else {
                errors.push(format!("line {}: unknown key '{key}' in [{section}]", n + 1));
            }
            continue;
        }
        let value = v.trim().trim_matches('"').to_string();
        if table.insert((section.clone(), key.clone()), value).is_some() {
            errors.push(format!("line {}: duplicate key '{key}' in [{section}]", n + 1));
        }
    }
    table
}

struct Fields<'a> {
    table: &'a Table,
    errors: &'a mut Vec<String>,
}

impl Fields<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.table.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    fn get<T: std::str::FromStr>(&mut self, section: &str, key: &str, default: T) -> T {
        match self.raw(section, key) {
            None => default,
            Some(v) => match v.parse() {
                Ok(x) => x,
                Err(_) => {
                    self.errors.push(format!("[{section}] {key} = '{v}' is not a valid value"));
                    default
                }
            },
        }
    }

    fn positive(&mut self, section: &str, key: &str, default: f64) -> f64 {
        let v = self.get(section, key, default);
        if !(v > 0.0 && v.is_finite()) {
            self.errors.push(format!("[{section}] {key} must be positive"));
            return default;
        }
        v
    }

    fn has(&self, section: &str, key: &str) -> bool {
        self.raw(section, key).is_some()
    }
}

fn parse_cysts(text: &str) -> std::result::Result<Vec<Cyst>, String> {
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|c| {
            let v: Vec<f64> = c
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format!("cyst '{c}': {e}"))?;
            match v[..] {
                [x, z, d] if d > 0.0 => Ok(Cyst {
                    x: x * 1e-3,
                    z: z * 1e-3,
                    diameter: d * 1e-3,
                }),
                _ => Err(format!("cyst '{c}' needs x,z,diameter with diameter > 0")),
            }
        })
        .collect()
}

/// Parses configuration text. `overrides` are `(section, key, value)`
/// triples applied on top of the file before validation.
pub fn parse_config_str(text: &str, overrides: &[(&str, &str, String)]) -> Result<ExperimentConfig> {
    let mut errors = Vec::new();
    let mut table = parse_table(text, &mut errors);
    for (s, k, v) in overrides {
        if KEYS.iter().any(|(sec, ks)| sec == s && ks.contains(k)) {
            table.insert((s.to_string(), k.to_string()), v.clone());
        } else {
            errors.push(format!("override: unknown key '{k}' in [{s}]"));
        }
    }
    let mut f = Fields {
        table: &table,
        errors: &mut errors,
    };

    let elements: usize = f.get("array", "elements", 128);
    let pitch = f.positive("array", "pitch_mm", 0.1) * 1e-3;
    let geometry = ArrayGeometry::new(elements.max(1), pitch).unwrap_or_default();
    if elements == 0 {
        f.errors.push("[array] elements must be at least 1".into());
    }
    let medium = Medium {
        sound_speed: f.positive("medium", "sound_speed", 1450.0),
        attenuation: f.get("medium", "attenuation_db_mhz_cm", 0.5),
    };
    if !(medium.attenuation >= 0.0) {
        f.errors.push("[medium] attenuation_db_mhz_cm must be non-negative".into());
    }
    let system = System {
        geometry,
        medium,
        center_freq: f.positive("transducer", "center_mhz", 7.5) * 1e6,
        fractional_bw: f.positive("transducer", "bandwidth", 0.70),
        sample_rate: f.positive("transducer", "sample_rate_mhz", 80.0) * 1e6,
        cycles_per_chip: f.get("excitation", "cycles_per_chip", 2),
        fixed_gain_db: f.get("receiver", "fixed_gain_db", 22.0),
        tgc_db_per_cm: f.get("receiver", "tgc_db_per_cm", 2.3),
    };
    let code_bits: usize = f.get("excitation", "code_bits", 8);
    if let Err(e) = Excitation::new(code_bits, system.center_freq, system.cycles_per_chip, system.sample_rate) {
        f.errors.push(format!("[excitation] {e}"));
    }
    if let Err(e) = system.response() {
        f.errors.push(format!("[transducer] {e}"));
    }

    let kind: String = f.get("scheme", "kind", "csf".to_string());
    let csf_keys = ["focus_mm", "half_sector_deg", "step_deg"];
    let scheme = match kind.as_str() {
        "dw" => {
            for k in csf_keys {
                if f.has("scheme", k) {
                    f.errors.push(format!("[scheme] {k} only applies to kind = csf"));
                }
            }
            if f.has("scheme", "rv_mm") {
                SchemeParams::Dw {
                    r_v: f.positive("scheme", "rv_mm", 14.0) * 1e-3,
                }
            } else {
                f.errors.push("[scheme] kind = dw requires rv_mm".into());
                SchemeParams::Dw { r_v: 14e-3 }
            }
        }
        "sta" | "csf" => {
            if f.has("scheme", "rv_mm") {
                f.errors.push(format!("[scheme] rv_mm only applies to kind = dw, not {kind}"));
            }
            if kind == "sta" {
                for k in csf_keys {
                    if f.has("scheme", k) {
                        f.errors.push(format!("[scheme] {k} only applies to kind = csf"));
                    }
                }
                SchemeParams::Sta
            } else {
                let focus = f.positive("scheme", "focus_mm", CSF_FOCUS * 1e3) * 1e-3;
                let half = f.positive("scheme", "half_sector_deg", CSF_HALF_SECTOR_DEG);
                let step = f.positive("scheme", "step_deg", CSF_STEP_DEG);
                if half >= 90.0 {
                    f.errors.push("[scheme] half_sector_deg must be below 90".into());
                }
                let n = (2.0 * half / step + 1e-9).floor() as usize + 1;
                SchemeParams::Csf {
                    plan: (0..n)
                        .map(|k| BeamSpec {
                            steer_deg: -half + k as f64 * step,
                            focus_range: focus,
                        })
                        .collect(),
                }
            }
        }
        other => {
            f.errors.push(format!("[scheme] kind = '{other}' is not one of dw, sta, csf"));
            SchemeParams::Sta
        }
    };

    let pkind: String = f.get("phantom", "kind", "pins".to_string());
    let speckle_keys = ["density_per_mm2", "x_min_mm", "x_max_mm", "z_min_mm", "z_max_mm", "cysts", "seed"];
    let phantom = match pkind.as_str() {
        "pins" => {
            let preset: String = f.get("phantom", "preset", "full_model550".to_string());
            if !crate::acoustics::PIN_PRESETS.contains(&preset.as_str()) {
                f.errors.push(format!("[phantom] unknown preset '{preset}'"));
            }
            PhantomSpec::Pins { preset }
        }
        "speckle" => {
            if f.has("phantom", "preset") {
                f.errors.push("[phantom] preset only applies to kind = pins".into());
            }
            let region = Rect {
                x_min: f.get("phantom", "x_min_mm", -20.0) * 1e-3,
                x_max: f.get("phantom", "x_max_mm", 20.0) * 1e-3,
                z_min: f.get("phantom", "z_min_mm", 5.0) * 1e-3,
                z_max: f.get("phantom", "z_max_mm", 60.0) * 1e-3,
            };
            if !(region.x_max > region.x_min && region.z_max > region.z_min && region.z_min > 0.0) {
                f.errors.push("[phantom] speckle region must be a non-empty rectangle with z_min_mm > 0".into());
            }
            let cysts = match f.raw("phantom", "cysts") {
                None => Vec::new(),
                Some(t) => parse_cysts(t).unwrap_or_else(|e| {
                    f.errors.push(format!("[phantom] {e}"));
                    Vec::new()
                }),
            };
            PhantomSpec::Speckle {
                region,
                density_per_mm2: f.positive("phantom", "density_per_mm2", 5.0),
                cysts,
                seed: f.get("phantom", "seed", 7),
            }
        }
        "file" => match f.raw("phantom", "file") {
            Some(p) => PhantomSpec::File { path: PathBuf::from(p) },
            None => {
                f.errors.push("[phantom] kind = file requires file".into());
                PhantomSpec::Pins {
                    preset: "full_model550".into(),
                }
            }
        },
        other => {
            f.errors.push(format!("[phantom] kind = '{other}' is not one of pins, speckle, file"));
            PhantomSpec::Pins {
                preset: "full_model550".into(),
            }
        }
    };
    if pkind != "speckle" {
        for k in speckle_keys {
            if f.has("phantom", k) {
                f.errors.push(format!("[phantom] {k} only applies to kind = speckle"));
            }
        }
    }
    if pkind != "file" && f.has("phantom", "file") {
        f.errors.push("[phantom] file only applies to kind = file".into());
    }

    let noise_power: f64 = f.get("run", "noise_power", 0.0);
    if !(noise_power >= 0.0) {
        f.errors.push("[run] noise_power must be non-negative".into());
    }
    let noise_realizations: usize = f.get("run", "noise_realizations", 13);
    if noise_realizations == 0 {
        f.errors.push("[run] noise_realizations must be at least 1".into());
    }
    let range_default = 4.0 * system.medium.sound_speed / (2.0 * system.sample_rate) * 1e3;
    let cfg = ExperimentConfig {
        compensate: f.get("receiver", "compensate", true),
        noise_power,
        seed: f.get("run", "seed", 1),
        noise_realizations,
        max_depth: f.positive("run", "max_depth_mm", 60.0) * 1e-3,
        out_dir: PathBuf::from(f.get("run", "out", "cdw_out".to_string())),
        save_rf: f.get("run", "save_rf", true),
        save_mf: f.get("run", "save_mf", true),
        angle_step_deg: f.positive("image", "angle_step_deg", CSF_STEP_DEG),
        range_step: f.positive("image", "range_step_mm", range_default) * 1e-3,
        pixel: f.positive("image", "pixel_mm", 0.1) * 1e-3,
        system,
        code_bits,
        scheme,
        phantom,
    };
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(errors))
    }
}
