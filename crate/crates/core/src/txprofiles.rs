//! Array geometry and per-element transmit delay profiles.

use crate::error::{Error, Result};

/// Carrier frequency used to express lengths in wavelengths.
pub const REFERENCE_FREQ: f64 = 7.5e6;
/// Sound speed used for wavelength bookkeeping only (not for propagation).
pub const REFERENCE_SOUND_SPEED: f64 = 1500.0;

/// Bookkeeping wavelength: 0.2 mm at 7.5 MHz.
pub fn reference_wavelength() -> f64 {
    REFERENCE_SOUND_SPEED / REFERENCE_FREQ
}

/// Converts a length in bookkeeping wavelengths to meters.
pub fn wavelengths_to_m(n: f64) -> f64 {
    n * reference_wavelength()
}

/// Linear array, element centers on the x axis, centered on 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pitch: f64,
    element_x: Vec<f64>,
}

impl ArrayGeometry {
    pub fn new(n_elements: usize, pitch: f64) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::param("n_elements", "must be positive"));
        }
        if !(pitch > 0.0) || !pitch.is_finite() {
            return Err(Error::param("pitch", "must be positive"));
        }
        let mid = (n_elements as f64 - 1.0) / 2.0;
        let element_x = (0..n_elements).map(|i| (i as f64 - mid) * pitch).collect();
        Ok(Self { pitch, element_x })
    }

    pub fn n_elements(&self) -> usize {
        self.element_x.len()
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn element_x(&self) -> &[f64] {
        &self.element_x
    }

    pub fn aperture(&self) -> f64 {
        self.n_elements() as f64 * self.pitch
    }

    /// Zero-based index of the element used for the water reference (the 64th of 128).
    pub fn mid_element(&self) -> usize {
        (self.n_elements() / 2).saturating_sub(1)
    }
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self::new(128, 0.1e-3).expect("default geometry is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProfileKind {
    Diverging { r_v: f64 },
    Focused { focus_range: f64, steer_deg: f64 },
    SingleElement { index: usize },
}

/// Firing delays, one per element, normalized so the earliest element fires at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayProfile {
    pub delays: Vec<f64>,
    pub kind: ProfileKind,
}

impl DelayProfile {
    /// Elements that actually fire.
    pub fn active_elements(&self) -> Vec<usize> {
        match self.kind {
            ProfileKind::SingleElement { index } => vec![index],
            _ => (0..self.delays.len()).collect(),
        }
    }
}

fn check_speed(c: f64) -> Result<()> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::param("sound_speed", "must be positive"));
    }
    Ok(())
}

/// Diverging wave emulating a virtual point source `r_v` behind the array center.
pub fn dw_delays(r_v: f64, geometry: &ArrayGeometry, c: f64) -> Result<DelayProfile> {
    if !(r_v > 0.0) || !r_v.is_finite() {
        return Err(Error::param("r_v", "virtual source distance must be positive"));
    }
    check_speed(c)?;
    let raw: Vec<f64> = geometry
        .element_x()
        .iter()
        .map(|&x| ((r_v * r_v + x * x).sqrt() - r_v) / c)
        .collect();
    Ok(DelayProfile {
        delays: shift_to_zero(raw),
        kind: ProfileKind::Diverging { r_v },
    })
}

fn shift_to_zero(mut d: Vec<f64>) -> Vec<f64> {
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    d.iter_mut().for_each(|v| *v -= min);
    d
}

/// Full angle, in degrees, subtended at the virtual source by the aperture.
pub fn sector_angle(r_v: f64, aperture: f64) -> Result<f64> {
    if !(r_v > 0.0) {
        return Err(Error::param("r_v", "virtual source distance must be positive"));
    }
    Ok(2.0 * (aperture / (2.0 * r_v)).atan().to_degrees())
}

/// Virtual source distance whose geometric sector equals `sector_deg`.
pub fn r_v_for_sector(sector_deg: f64, aperture: f64) -> f64 {
    aperture / (2.0 * (sector_deg.to_radians() / 2.0).tan())
}

/// Focus point in array coordinates for polar `(range, steer)`, steer measured from +z.
pub fn polar_to_xz(range: f64, steer_deg: f64) -> (f64, f64) {
    let th = steer_deg.to_radians();
    (range * th.sin(), range * th.cos())
}

/// Delays converging the wavefront on the polar point `(focus_range, steer_deg)`.
pub fn focused_delays(
    focus_range: f64,
    steer_deg: f64,
    geometry: &ArrayGeometry,
    c: f64,
) -> Result<DelayProfile> {
    if !(focus_range > 0.0) || !focus_range.is_finite() {
        return Err(Error::param("focus_range", "must be positive"));
    }
    if !(steer_deg.abs() < 90.0) {
        return Err(Error::param("steer_angle", "must lie strictly inside (-90, 90) degrees"));
    }
    check_speed(c)?;
    let (fx, fz) = polar_to_xz(focus_range, steer_deg);
    let dist: Vec<f64> = geometry
        .element_x()
        .iter()
        .map(|&x| ((fx - x).powi(2) + fz * fz).sqrt())
        .collect();
    let far = dist.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(DelayProfile {
        delays: dist.iter().map(|d| (far - d) / c).collect(),
        kind: ProfileKind::Focused {
            focus_range,
            steer_deg,
        },
    })
}

/// Single-element firing (STA transmit event).
pub fn single_element(index: usize, geometry: &ArrayGeometry) -> Result<DelayProfile> {
    if index >= geometry.n_elements() {
        return Err(Error::param(
            "element_index",
            format!("{index} out of range for {} elements", geometry.n_elements()),
        ));
    }
    Ok(DelayProfile {
        delays: vec![0.0; geometry.n_elements()],
        kind: ProfileKind::SingleElement { index },
    })
}

/// One steered, focused beam of a conventional sector scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSpec {
    pub steer_deg: f64,
    pub focus_range: f64,
}

pub const CSF_BEAMS: usize = 181;
pub const CSF_HALF_SECTOR_DEG: f64 = 45.0;
pub const CSF_STEP_DEG: f64 = 0.5;
pub const CSF_FOCUS: f64 = 40e-3;

/// The 181-beam, ±45°, 0.5° step plan focused at 40 mm.
pub fn csf_scan_plan() -> Vec<BeamSpec> {
    (0..CSF_BEAMS)
        .map(|k| BeamSpec {
            steer_deg: -CSF_HALF_SECTOR_DEG + k as f64 * CSF_STEP_DEG,
            focus_range: CSF_FOCUS,
        })
        .collect()
}

/// Frames per second when each frame needs `n_tx` round trips to `depth`.
pub fn frame_rate(n_tx: usize, depth: f64, c: f64) -> Result<f64> {
    if n_tx == 0 || !(depth > 0.0) {
        return Err(Error::param("frame_rate", "transmissions and depth must be positive"));
    }
    check_speed(c)?;
    Ok(1.0 / (n_tx as f64 * 2.0 * depth / c))
}
