//! Image quality measures: noise power, SNR₊₁, penetration depth, CNR,
//! pin signal strength and signal-to-speckle ratio.

use crate::beamform::{CartesianImage, PolarGrid, Scanlines};
use crate::error::{Error, Result};

/// Curve sampled at the centers of equal-width range bins.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthCurve {
    depths: Vec<f64>,
    values: Vec<f64>,
    pub bin_width: f64,
    /// True when `values` are in dB.
    pub db: bool,
}

impl DepthCurve {
    pub fn new(depths: Vec<f64>, values: Vec<f64>, bin_width: f64, db: bool) -> Result<Self> {
        if depths.len() != values.len() {
            return Err(Error::ShapeMismatch(format!("{} depths, {} values", depths.len(), values.len())));
        }
        if depths.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("depths", "must be strictly increasing"));
        }
        Ok(Self {
            depths,
            values,
            bin_width,
            db,
        })
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }

    /// Value of the bin containing `depth`.
    pub fn at(&self, depth: f64) -> Option<f64> {
        self.depths
            .iter()
            .position(|&d| (depth - d).abs() <= self.bin_width / 2.0)
            .map(|k| self.values[k])
    }
}

pub const DEPTH_BIN: f64 = 1e-3;

/// Mean of `value²` per range bin, pooled over all angles and images.
pub fn power_by_depth(images: &[&Scanlines], bin_width: f64) -> Result<DepthCurve> {
    let first = images.first().ok_or_else(|| Error::Degenerate("no images".into()))?;
    if !(bin_width > 0.0) {
        return Err(Error::param("bin_width", "must be positive"));
    }
    let g = &first.grid;
    if images.iter().any(|im| im.grid != *g) {
        return Err(Error::ShapeMismatch("images are on different grids".into()));
    }
    let r0 = g.ranges()[0];
    let bin_of = |r: f64| ((r - r0) / bin_width + 1e-9).floor() as usize;
    let n_bins = bin_of(g.ranges()[g.n_ranges() - 1]) + 1;
    let mut sum = vec![0.0; n_bins];
    let mut count = vec![0usize; n_bins];
    for im in images {
        for ia in 0..g.n_angles() {
            for (ir, &v) in im.line(ia).iter().enumerate() {
                let b = bin_of(g.ranges()[ir]);
                sum[b] += v * v;
                count[b] += 1;
            }
        }
    }
    let (mut depths, mut values) = (Vec::new(), Vec::new());
    for b in 0..n_bins {
        if count[b] > 0 {
            depths.push(r0 + (b as f64 + 0.5) * bin_width);
            values.push(sum[b] / count[b] as f64);
        }
    }
    DepthCurve::new(depths, values, bin_width, false)
}

/// Per-depth noise power from independent noise-only images.
pub fn noise_power(noise_images: &[&Scanlines]) -> Result<DepthCurve> {
    power_by_depth(noise_images, DEPTH_BIN)
}

/// `10·log10(p_speckle/p_noise + 1)`.
pub fn snr_plus_one_db(p_speckle: f64, p_noise: f64) -> Result<f64> {
    if !(p_noise > 0.0) {
        return Err(Error::Degenerate("zero noise power".into()));
    }
    Ok(10.0 * (p_speckle / p_noise + 1.0).log10())
}

/// SNR₊₁ per depth bin of the speckle envelope image against a noise curve.
pub fn snr_plus_one(speckle: &Scanlines, noise: &DepthCurve) -> Result<DepthCurve> {
    if noise.db {
        return Err(Error::param("noise", "expected a linear power curve"));
    }
    let sp = power_by_depth(&[speckle], noise.bin_width)?;
    if sp.depths.len() != noise.depths.len() || sp.depths.iter().zip(&noise.depths).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::ShapeMismatch("speckle and noise depth axes differ".into()));
    }
    let values = sp
        .values
        .iter()
        .zip(&noise.values)
        .map(|(&s, &n)| snr_plus_one_db(s, n))
        .collect::<Result<Vec<_>>>()?;
    DepthCurve::new(sp.depths, values, noise.bin_width, true)
}

pub const PENETRATION_THRESHOLD_DB: f64 = 6.0;

/// First depth where a dB curve drops below 6 dB and stays below for the
/// following two bins, linearly interpolated between bin centers. `None`
/// when the curve never does.
pub fn penetration_depth(curve: &DepthCurve) -> Option<f64> {
    let v = &curve.values;
    let d = &curve.depths;
    let below = |k: usize| v.get(k).is_none_or(|&x| x < PENETRATION_THRESHOLD_DB);
    let k = (0..v.len()).find(|&k| below(k) && below(k + 1) && below(k + 2))?;
    if k == 0 {
        return Some(d[0]);
    }
    let (v0, v1) = (v[k - 1], v[k]);
    let w = if v0 > v1 { (v0 - PENETRATION_THRESHOLD_DB) / (v0 - v1) } else { 1.0 };
    Some(d[k - 1] + w.clamp(0.0, 1.0) * (d[k] - d[k - 1]))
}

/// Circular or rectangular region, centered at `(x, z)` in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoiSpec {
    Disc { x: f64, z: f64, diameter: f64 },
    Rect { x: f64, z: f64, width: f64, height: f64 },
}

impl RoiSpec {
    pub fn contains(&self, px: f64, pz: f64) -> bool {
        match *self {
            RoiSpec::Disc { x, z, diameter } => (px - x).hypot(pz - z) <= diameter / 2.0,
            RoiSpec::Rect { x, z, width, height } => (px - x).abs() <= width / 2.0 && (pz - z).abs() <= height / 2.0,
        }
    }

    fn boundary(&self) -> Vec<(f64, f64)> {
        match *self {
            RoiSpec::Disc { x, z, diameter } => (0..64)
                .map(|k| {
                    let a = k as f64 / 64.0 * std::f64::consts::TAU;
                    (x + diameter / 2.0 * a.cos(), z + diameter / 2.0 * a.sin())
                })
                .collect(),
            RoiSpec::Rect { x, z, width, height } => {
                let (hw, hh) = (width / 2.0, height / 2.0);
                (0..16)
                    .flat_map(|k| {
                        let t = k as f64 / 16.0;
                        [
                            (x - hw + 2.0 * hw * t, z - hh),
                            (x + hw, z - hh + 2.0 * hh * t),
                            (x + hw - 2.0 * hw * t, z + hh),
                            (x - hw, z + hh - 2.0 * hh * t),
                        ]
                    })
                    .collect()
            }
        }
    }

    fn center(&self) -> (f64, f64) {
        match *self {
            RoiSpec::Disc { x, z, .. } | RoiSpec::Rect { x, z, .. } => (x, z),
        }
    }

    /// In-sector pixel values whose centers fall in the region.
    pub fn pixels(&self, image: &CartesianImage) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        let mut outside = false;
        for iz in 0..image.nz {
            for ix in 0..image.nx {
                let (px, pz) = image.pixel_center(ix, iz);
                if self.contains(px, pz) {
                    match image.value(ix, iz) {
                        Some(v) => out.push(v),
                        None => outside = true,
                    }
                }
            }
        }
        if outside {
            let (x, z) = self.center();
            return Err(Error::OutOfRegion {
                x_mm: x * 1e3,
                z_mm: z * 1e3,
                what: "region extends outside the sector",
            });
        }
        Ok(out)
    }
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
}

pub const MIN_ROI_PIXELS: usize = 8;

/// `|μC − μB| / √(σC² + σB²)` over two pixel populations.
pub fn cnr_from_pixels(cyst: &[f64], background: &[f64]) -> Result<f64> {
    for (name, p) in [("cyst", cyst), ("background", background)] {
        if p.len() < MIN_ROI_PIXELS {
            return Err(Error::Degenerate(format!("{name} region has {} pixels", p.len())));
        }
    }
    let (mc, vc) = mean_var(cyst);
    let (mb, vb) = mean_var(background);
    let s = (vc + vb).sqrt();
    if s == 0.0 {
        return Err(Error::Degenerate("zero pixel variance".into()));
    }
    Ok((mc - mb).abs() / s)
}

/// CNR on a log-compressed raster.
pub fn cnr(log_image: &CartesianImage, cyst_roi: &RoiSpec, background_roi: &RoiSpec) -> Result<f64> {
    let disjoint = cyst_roi.boundary().iter().all(|&(x, z)| !background_roi.contains(x, z))
        && background_roi.boundary().iter().all(|&(x, z)| !cyst_roi.contains(x, z))
        && !background_roi.contains(cyst_roi.center().0, cyst_roi.center().1);
    if !disjoint {
        return Err(Error::param("roi", "regions overlap"));
    }
    cnr_from_pixels(&cyst_roi.pixels(log_image)?, &background_roi.pixels(log_image)?)
}

pub const PIN_SEARCH_HALF_WIDTH: f64 = 1e-3;
pub const ANNULUS_INNER: f64 = 2e-3;
pub const ANNULUS_OUTER: f64 = 4e-3;

fn in_sector(grid: &PolarGrid, x: f64, z: f64) -> Result<()> {
    grid.locate(x, z).map(|_| ()).ok_or(Error::OutOfRegion {
        x_mm: x * 1e3,
        z_mm: z * 1e3,
        what: "point outside the image sector",
    })
}

/// Visits grid points whose range lies in `[r_lo, r_hi]`.
fn for_points_in_ranges(grid: &PolarGrid, r_lo: f64, r_hi: f64, mut f: impl FnMut(usize, usize, f64, f64)) {
    let r = grid.ranges();
    let lo = r.partition_point(|&v| v < r_lo);
    let hi = r.partition_point(|&v| v <= r_hi);
    for ia in 0..grid.n_angles() {
        for ir in lo..hi {
            let (x, z) = grid.point(ia, ir);
            f(ia, ir, x, z);
        }
    }
}

/// Peak squared envelope within ±1 mm of `(x, z)`, in dB.
pub fn pin_peak_db(envelope: &Scanlines, x: f64, z: f64) -> Result<f64> {
    in_sector(&envelope.grid, x, z)?;
    let h = PIN_SEARCH_HALF_WIDTH;
    let r = x.hypot(z);
    let mut peak: f64 = 0.0;
    for_points_in_ranges(&envelope.grid, r - 2.0 * h, r + 2.0 * h, |ia, ir, px, pz| {
        if (px - x).abs() <= h && (pz - z).abs() <= h {
            peak = peak.max(envelope.get(ia, ir).powi(2));
        }
    });
    Ok(10.0 * peak.log10())
}

/// One dB value per pin.
pub fn signal_strength_profile(envelope: &Scanlines, pins: &[(f64, f64)]) -> Result<Vec<f64>> {
    pins.iter().map(|&(x, z)| pin_peak_db(envelope, x, z)).collect()
}

/// Pin peak power over mean speckle power in the 2–4 mm annulus, in dB.
pub fn ssr(envelope: &Scanlines, pin: (f64, f64)) -> Result<f64> {
    let (x, z) = pin;
    for k in 0..64 {
        let a = k as f64 / 64.0 * std::f64::consts::TAU;
        in_sector(&envelope.grid, x + ANNULUS_OUTER * a.cos(), z + ANNULUS_OUTER * a.sin()).map_err(|_| Error::OutOfRegion {
            x_mm: x * 1e3,
            z_mm: z * 1e3,
            what: "annulus leaves the sector",
        })?;
    }
    let peak = pin_peak_db(envelope, x, z)?;
    let r = x.hypot(z);
    let (mut sum, mut n) = (0.0, 0usize);
    for_points_in_ranges(&envelope.grid, r - ANNULUS_OUTER, r + ANNULUS_OUTER, |ia, ir, px, pz| {
        let d = (px - x).hypot(pz - z);
        if (ANNULUS_INNER..=ANNULUS_OUTER).contains(&d) {
            sum += envelope.get(ia, ir).powi(2);
            n += 1;
        }
    });
    if n == 0 || sum == 0.0 {
        return Err(Error::Degenerate("empty or silent annulus".into()));
    }
    Ok(peak - 10.0 * (sum / n as f64).log10())
}
