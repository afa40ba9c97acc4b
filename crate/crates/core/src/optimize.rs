//! Virtual-source distance sweep: pick the diverging-wave profile whose pin
//! signal-strength distribution best matches synthetic transmit aperture.

use rayon::prelude::*;

use crate::acoustics::{Phantom, Scatterer};
use crate::beamform::{envelope, PolarGrid};
use crate::error::{Error, Result};
use crate::metrics::{pin_peak_db, PIN_SEARCH_HALF_WIDTH};
use crate::pipeline::{Imager, SchemeParams, System};
use crate::txprofiles::{wavelengths_to_m, ArrayGeometry};

/// One aperture / sector-angle combination with the pins it must insonify.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub n_elements: usize,
    pub sector_deg: f64,
    /// Pins the objective is evaluated over.
    pub pins: Vec<(f64, f64)>,
    /// Pin at which DW and STA strengths are compared.
    pub central_pin: (f64, f64),
}

impl Scenario {
    /// Required pins plus the central pin, without duplicates.
    pub fn all_pins(&self) -> Vec<(f64, f64)> {
        let mut all = self.pins.clone();
        if !all.contains(&self.central_pin) {
            all.push(self.central_pin);
        }
        all
    }

    pub fn phantom(&self, system: &System) -> Result<Phantom> {
        let s = self
            .all_pins()
            .into_iter()
            .map(|(x, z)| Scatterer { x, z, reflectivity: 1.0 })
            .collect();
        Phantom::new(s, system.medium, self.name.clone())
    }

    fn check_coverage(&self) -> Result<()> {
        for &(x, z) in &self.all_pins() {
            let ang = x.atan2(z).to_degrees();
            if ang.abs() > self.sector_deg / 2.0 + 1e-9 || z <= 0.0 {
                return Err(Error::OutOfRegion {
                    x_mm: x * 1e3,
                    z_mm: z * 1e3,
                    what: "pin not covered by the scenario sector",
                });
            }
        }
        Ok(())
    }
}

fn row(depth: f64, xs: &[f64]) -> Vec<(f64, f64)> {
    xs.iter().map(|&x| (x, depth)).collect()
}

/// The six aperture / sector combinations, three pins per row. `large` is
/// the element count of the wide aperture; the narrow one has half as many.
pub fn table1_scenarios(large: usize) -> Vec<Scenario> {
    let mm = 1e-3;
    let mut out = Vec::new();
    for n in [large, large / 2] {
        let aperture_lambda = n / 2;
        let layouts: [(f64, Vec<(f64, f64)>, (f64, f64)); 3] = [
            (90.0, row(20.0 * mm, &[-20.0 * mm, 0.0, 20.0 * mm]), (0.0, 25.0 * mm)),
            (
                60.0,
                [row(20.0 * mm, &[-10.0 * mm, 0.0, 10.0 * mm]), row(40.0 * mm, &[-20.0 * mm, 0.0, 20.0 * mm])].concat(),
                (0.0, 20.0 * mm),
            ),
            (30.0, row(40.0 * mm, &[-10.0 * mm, 0.0, 10.0 * mm]), (0.0, 20.0 * mm)),
        ];
        for (sector, pins, central) in layouts {
            out.push(Scenario {
                name: format!("{aperture_lambda}lambda_{sector:.0}deg"),
                n_elements: n,
                sector_deg: sector,
                pins,
                central_pin: central,
            });
        }
    }
    out
}

/// Settings shared by every candidate of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Geometry pitch and everything else; element count comes from the scenario.
    pub system: System,
    pub dw_code_bits: usize,
    pub sta_code_bits: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            system: System::default(),
            dw_code_bits: 8,
            sta_code_bits: 1,
        }
    }
}

/// Default sweep grid: 0.5 mm steps over [10.5, 100] mm.
pub fn default_candidates() -> Vec<f64> {
    (0..=179).map(|k| 10.5e-3 + k as f64 * 0.5e-3).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub scenario: String,
    pub r_v_candidates: Vec<f64>,
    /// `[candidate][pin]`, dB, over [`Scenario::all_pins`].
    pub dw_profiles: Vec<Vec<f64>>,
    pub sta_profile: Vec<f64>,
    pub objective: Vec<f64>,
    pub best_r_v: f64,
    pub central_strength_diff_db: f64,
    /// Indices into the profiles of the pins the objective uses.
    pub required: Vec<usize>,
    pub central: usize,
}

/// RMS of the mean-removed difference between two dB profiles over `idx`.
pub fn profile_mismatch(dw: &[f64], sta: &[f64], idx: &[usize]) -> f64 {
    let n = idx.len() as f64;
    let mean = |p: &[f64]| idx.iter().map(|&k| p[k]).sum::<f64>() / n;
    let (md, ms) = (mean(dw), mean(sta));
    (idx.iter().map(|&k| ((dw[k] - md) - (sta[k] - ms)).powi(2)).sum::<f64>() / n).sqrt()
}

/// First index of the smallest value.
pub fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = k;
        }
    }
    best
}

/// Small polar grid enclosing the pin search box.
fn pin_grid(pin: (f64, f64), c: f64, fs: f64) -> Result<PolarGrid> {
    let (x, z) = pin;
    let r = x.hypot(z);
    let ang = x.atan2(z).to_degrees();
    let half = PIN_SEARCH_HALF_WIDTH * 1.2;
    let step = (0.1e-3 / r).to_degrees();
    let n = (half / 0.1e-3).round();
    let dr = c / (2.0 * fs);
    // Range margin keeps the envelope clear of line-end effects.
    PolarGrid::uniform(ang - n * step, ang + n * step * (1.0 + 1e-9), step, r - 2.0 * half, r + 2.0 * half, dr)
}

/// Peak dB at each pin of the envelope formed by `scheme`.
fn pin_profile(imager: &Imager, scheme: &SchemeParams, phantom: &Phantom, pins: &[(f64, f64)]) -> Result<Vec<f64>> {
    let frames = imager.prepare(scheme, &imager.simulate(scheme, phantom, 0.0, 0)?)?;
    let fs = imager.system.sample_rate;
    let c = imager.c();
    pins.iter()
        .map(|&p| {
            let grid = pin_grid(p, c, fs)?;
            let env = envelope(&imager.beamform_prepared(scheme, &frames, &grid)?);
            pin_peak_db(&env, p.0, p.1)
        })
        .collect()
}

fn scenario_system(scenario: &Scenario, config: &SweepConfig) -> Result<System> {
    Ok(System {
        geometry: ArrayGeometry::new(scenario.n_elements, config.system.geometry.pitch())?,
        ..config.system.clone()
    })
}

/// Runs the full chain per candidate and STA once; selects the candidate
/// whose mean-removed profile is closest to STA's.
pub fn sweep_rv(candidates: &[f64], scenario: &Scenario, config: &SweepConfig) -> Result<SweepResult> {
    if candidates.is_empty() {
        return Err(Error::param("candidates", "empty sweep"));
    }
    if let Some(bad) = candidates.iter().find(|&&r| !(r > 0.0 && r <= 100e-3 + 1e-12)) {
        return Err(Error::param("candidates", format!("{bad} m is outside (0, 100 mm]")));
    }
    scenario.check_coverage()?;
    let system = scenario_system(scenario, config)?;
    let pins = scenario.all_pins();
    let max_depth = pins.iter().map(|p| p.0.hypot(p.1)).fold(0.0, f64::max) + 5e-3;
    let phantom = scenario.phantom(&system)?;

    let sta_imager = Imager::new(system.clone(), config.sta_code_bits, max_depth)?;
    let sta_profile = pin_profile(&sta_imager, &SchemeParams::Sta, &phantom, &pins)?;

    let dw_imager = Imager::new(system, config.dw_code_bits, max_depth)?;
    let dw_profiles = candidates
        .par_iter()
        .map(|&r_v| pin_profile(&dw_imager, &SchemeParams::Dw { r_v }, &phantom, &pins))
        .collect::<Result<Vec<_>>>()?;

    let required: Vec<usize> = (0..scenario.pins.len()).collect();
    let central = pins.iter().position(|&p| p == scenario.central_pin).expect("central pin present");
    let objective: Vec<f64> = dw_profiles
        .iter()
        .map(|p| profile_mismatch(p, &sta_profile, &required))
        .collect();
    let best = argmin_first(&objective);
    Ok(SweepResult {
        scenario: scenario.name.clone(),
        r_v_candidates: candidates.to_vec(),
        central_strength_diff_db: dw_profiles[best][central] - sta_profile[central],
        best_r_v: candidates[best],
        dw_profiles,
        sta_profile,
        objective,
        required,
        central,
    })
}

/// Outcome of the three structural checks over six sweeps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrendReport {
    /// `(aperture elements, sector, best r_v, central diff)` per scenario.
    pub rows: Vec<(usize, f64, f64, f64)>,
    pub rv_grows_as_sector_narrows: bool,
    pub smaller_aperture_smaller_rv: bool,
    pub dw_exceeds_sta_everywhere: bool,
}

impl TrendReport {
    pub fn all_hold(&self) -> bool {
        self.rv_grows_as_sector_narrows && self.smaller_aperture_smaller_rv && self.dw_exceeds_sta_everywhere
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("aperture_lambda,sector_deg,best_rv_mm,best_rv_lambda,central_diff_db\n");
        for &(n, sector, rv, diff) in &self.rows {
            let lambda = wavelengths_to_m(1.0);
            s.push_str(&format!(
                "{},{},{:.2},{:.1},{:.2}\n",
                n / 2,
                sector,
                rv * 1e3,
                rv / lambda,
                diff
            ));
        }
        let yn = |b: bool| if b { "holds" } else { "fails" };
        s.push_str(&format!("r_v increases as sector narrows: {}\n", yn(self.rv_grows_as_sector_narrows)));
        s.push_str(&format!("smaller aperture needs shorter r_v: {}\n", yn(self.smaller_aperture_smaller_rv)));
        s.push_str(&format!("coded DW stronger than STA at the central pin: {}\n", yn(self.dw_exceeds_sta_everywhere)));
        s
    }
}

/// Checks the aperture / sector trends over the six scenarios, paired with
/// the scenarios they came from.
pub fn table1_trends(results: &[(Scenario, SweepResult)]) -> Result<TrendReport> {
    let mut apertures: Vec<usize> = results.iter().map(|(s, _)| s.n_elements).collect();
    apertures.sort_unstable();
    apertures.dedup();
    let sectors = [90.0, 60.0, 30.0];
    if apertures.len() != 2 {
        return Err(Error::MissingScenario(format!("need two apertures, got {}", apertures.len())));
    }
    let find = |n: usize, sector: f64| {
        results
            .iter()
            .find(|(s, _)| s.n_elements == n && (s.sector_deg - sector).abs() < 1e-9)
            .map(|(_, r)| r)
            .ok_or_else(|| Error::MissingScenario(format!("{} lambda, {sector} deg", n / 2)))
    };
    let mut rows = Vec::new();
    let mut grows = true;
    for &n in &apertures {
        let mut prev = 0.0;
        for sector in sectors {
            let r = find(n, sector)?;
            grows &= r.best_r_v > prev;
            prev = r.best_r_v;
            rows.push((n, sector, r.best_r_v, r.central_strength_diff_db));
        }
    }
    let mut smaller = true;
    for sector in sectors {
        smaller &= find(apertures[0], sector)?.best_r_v < find(apertures[1], sector)?.best_r_v;
    }
    let exceeds = rows.iter().all(|r| r.3 > 0.0);
    rows.sort_by_key(|r| std::cmp::Reverse(r.0));
    Ok(TrendReport {
        rows,
        rv_grows_as_sector_narrows: grows,
        smaller_aperture_smaller_rv: smaller,
        dw_exceeds_sta_everywhere: exceeds,
    })
}
