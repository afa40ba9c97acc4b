//! Delay-and-sum beamforming (DW, STA, CSF), gain stages, envelope
//! detection, log compression and scan conversion.

use rayon::prelude::*;

use crate::acoustics::RFFrame;
use crate::dsp;
use crate::error::{Error, Result};
use crate::receiver::MFOutput;
use crate::txprofiles::{polar_to_xz, ArrayGeometry, BeamSpec};

/// Sector sampling lattice centered on the array, angles from +z.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarGrid {
    angles_deg: Vec<f64>,
    ranges: Vec<f64>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

impl PolarGrid {
    pub fn new(angles_deg: Vec<f64>, ranges: Vec<f64>) -> Result<Self> {
        if angles_deg.is_empty() || ranges.is_empty() {
            return Err(Error::Degenerate("empty polar grid".into()));
        }
        if !strictly_increasing(&angles_deg) || !strictly_increasing(&ranges) {
            return Err(Error::param("grid", "axes must be strictly increasing"));
        }
        if !(ranges[0] > 0.0) {
            return Err(Error::param("grid", "ranges must be positive"));
        }
        if angles_deg.iter().any(|a| !(a.abs() < 90.0)) {
            let a = angles_deg.iter().copied().find(|a| !(a.abs() < 90.0)).unwrap_or(90.0);
            let (x, z) = polar_to_xz(ranges[0], a);
            return Err(Error::OutOfRegion {
                x_mm: x * 1e3,
                z_mm: z * 1e3,
                what: "behind the array",
            });
        }
        Ok(Self { angles_deg, ranges })
    }

    /// Uniform lattice; both end points included when they fall on the step.
    pub fn uniform(angle_lo: f64, angle_hi: f64, angle_step: f64, range_lo: f64, range_hi: f64, range_step: f64) -> Result<Self> {
        let axis = |lo: f64, hi: f64, step: f64| -> Vec<f64> {
            let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            (0..n).map(|k| lo + k as f64 * step).collect()
        };
        if !(angle_step > 0.0 && range_step > 0.0) {
            return Err(Error::param("grid", "steps must be positive"));
        }
        Self::new(axis(angle_lo, angle_hi, angle_step), axis(range_lo, range_hi, range_step))
    }

    /// ±45° in 0.5° steps; range step of four RF samples.
    pub fn default_sector(max_range: f64, c: f64, sample_rate: f64) -> Result<Self> {
        let dr = 4.0 * c / (2.0 * sample_rate);
        Self::uniform(-45.0, 45.0, 0.5, dr, max_range, dr)
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn ranges(&self) -> &[f64] {
        &self.ranges
    }

    pub fn n_angles(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn n_ranges(&self) -> usize {
        self.ranges.len()
    }

    pub fn len(&self) -> usize {
        self.n_angles() * self.n_ranges()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, ia: usize, ir: usize) -> (f64, f64) {
        polar_to_xz(self.ranges[ir], self.angles_deg[ia])
    }

    /// Fractional (angle, range) indices of a Cartesian point, if inside the lattice.
    pub fn locate(&self, x: f64, z: f64) -> Option<(f64, f64)> {
        let r = x.hypot(z);
        let a = x.atan2(z).to_degrees();
        let fa = frac_index(&self.angles_deg, a)?;
        let fr = frac_index(&self.ranges, r)?;
        Some((fa, fr))
    }
}

fn frac_index(axis: &[f64], v: f64) -> Option<f64> {
    let n = axis.len();
    if n == 1 {
        return ((v - axis[0]).abs() <= 1e-12).then_some(0.0);
    }
    if v < axis[0] || v > axis[n - 1] {
        return None;
    }
    let k = axis.partition_point(|&a| a <= v).clamp(1, n - 1);
    let (a0, a1) = (axis[k - 1], axis[k]);
    Some((k - 1) as f64 + (v - a0) / (a1 - a0))
}

/// Values on a polar grid, row-major `[angle][range]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scanlines {
    pub grid: PolarGrid,
    data: Vec<f64>,
}

impl Scanlines {
    pub fn zeros(grid: PolarGrid) -> Self {
        let n = grid.len();
        Self { grid, data: vec![0.0; n] }
    }

    pub fn from_data(grid: PolarGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {} x {} grid",
                data.len(),
                grid.n_angles(),
                grid.n_ranges()
            )));
        }
        Ok(Self { grid, data })
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn line(&self, ia: usize) -> &[f64] {
        let n = self.grid.n_ranges();
        &self.data[ia * n..(ia + 1) * n]
    }

    pub fn get(&self, ia: usize, ir: usize) -> f64 {
        self.data[ia * self.grid.n_ranges() + ir]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Bilinear sample at fractional indices.
    pub fn bilinear(&self, fa: f64, fr: f64) -> f64 {
        let na = self.grid.n_angles();
        let nr = self.grid.n_ranges();
        let a0 = (fa.floor() as usize).min(na - 1);
        let r0 = (fr.floor() as usize).min(nr - 1);
        let a1 = (a0 + 1).min(na - 1);
        let r1 = (r0 + 1).min(nr - 1);
        let wa = fa - a0 as f64;
        let wr = fr - r0 as f64;
        let v00 = self.get(a0, r0);
        let v01 = self.get(a0, r1);
        let v10 = self.get(a1, r0);
        let v11 = self.get(a1, r1);
        (1.0 - wa) * ((1.0 - wr) * v00 + wr * v01) + wa * ((1.0 - wr) * v10 + wr * v11)
    }

    /// Grid indices of the largest value.
    pub fn argmax(&self) -> (usize, usize) {
        let k = self
            .data
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (k, &v)| if v > a.1 { (k, v) } else { a })
            .0;
        (k / self.grid.n_ranges(), k % self.grid.n_ranges())
    }
}

/// Applies `fixed_db` plus a gain growing `tgc_db_per_cm` per cm of depth `c·t/2`.
pub fn apply_gain(frame: &RFFrame, fixed_db: f64, tgc_db_per_cm: f64, c: f64) -> RFFrame {
    let gains: Vec<f64> = (0..frame.n_samples())
        .map(|n| {
            let depth_cm = c * frame.time_of(n) / 2.0 * 100.0;
            10f64.powf((fixed_db + tgc_db_per_cm * depth_cm) / 20.0)
        })
        .collect();
    let mut out = frame.clone();
    for ch in out.channels_mut() {
        ch.iter_mut().zip(&gains).for_each(|(v, g)| *v *= g);
    }
    out
}

#[inline]
fn interp(ch: &[f64], u: f64) -> f64 {
    if u < 0.0 {
        return 0.0;
    }
    let k = u.floor() as usize;
    if k + 1 >= ch.len() {
        return if k + 1 == ch.len() && u == k as f64 { ch[k] } else { 0.0 };
    }
    let w = u - k as f64;
    ch[k] * (1.0 - w) + ch[k + 1] * w
}

/// Point source from which a transmitted wavefront appears to emanate. The
/// wavefront crosses the array plane (nearest point) at t = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualSource {
    pub x: f64,
    /// Non-positive: at or behind the array plane.
    pub z: f64,
}

impl VirtualSource {
    fn tx_time(&self, x: f64, z: f64, c: f64) -> f64 {
        ((x - self.x).hypot(z - self.z) + self.z) / c
    }
}

/// Receive-focuses channel data (one event per virtual source) on every grid point.
fn das_events(events: &[(VirtualSource, &RFFrame)], grid: &PolarGrid, geometry: &ArrayGeometry, c: f64) -> Result<Scanlines> {
    for (_, f) in events {
        if f.n_elements() != geometry.n_elements() {
            return Err(Error::ShapeMismatch(format!(
                "{} channels for {} elements",
                f.n_elements(),
                geometry.n_elements()
            )));
        }
    }
    let ex = geometry.element_x();
    let nr = grid.n_ranges();
    let mut data = vec![0.0; grid.len()];
    data.par_chunks_mut(nr).enumerate().for_each(|(ia, row)| {
        let mut rx = vec![0.0; ex.len()];
        for (ir, out) in row.iter_mut().enumerate() {
            let (x, z) = grid.point(ia, ir);
            for (d, &e) in rx.iter_mut().zip(ex) {
                *d = (x - e).hypot(z) / c;
            }
            let mut acc = 0.0;
            for (vs, f) in events {
                let base = (vs.tx_time(x, z, c) - f.t0) * f.sample_rate;
                for (i, t_rx) in rx.iter().enumerate() {
                    acc += interp(f.channel(i), base + t_rx * f.sample_rate);
                }
            }
            *out = acc;
        }
    });
    Scanlines::from_data(grid.clone(), data)
}

/// Beamforms correlator output of one diverging-wave event with virtual source `r_v` behind the center.
pub fn das_dw(mf: &MFOutput, r_v: f64, grid: &PolarGrid, geometry: &ArrayGeometry, c: f64) -> Result<Scanlines> {
    if !(r_v > 0.0) {
        return Err(Error::param("r_v", "must be positive"));
    }
    das_virtual_source(mf, VirtualSource { x: 0.0, z: -r_v }, grid, geometry, c)
}

/// Beamforms one event whose wavefront emanates from `source`.
pub fn das_virtual_source(
    mf: &MFOutput,
    source: VirtualSource,
    grid: &PolarGrid,
    geometry: &ArrayGeometry,
    c: f64,
) -> Result<Scanlines> {
    das_events(&[(source, &**mf)], grid, geometry, c)
}

/// Coherent sum over the given single-element transmit events.
pub fn das_sta_events(events: &[(usize, &MFOutput)], grid: &PolarGrid, geometry: &ArrayGeometry, c: f64) -> Result<Scanlines> {
    let ex = geometry.element_x();
    let ev = events
        .iter()
        .map(|&(j, mf)| {
            ex.get(j)
                .map(|&x| (VirtualSource { x, z: 0.0 }, &**mf))
                .ok_or_else(|| Error::param("tx_element", format!("{j} out of range")))
        })
        .collect::<Result<Vec<_>>>()?;
    das_events(&ev, grid, geometry, c)
}

/// Synthetic transmit aperture: `mf_set[j]` holds the event fired by element `j`.
pub fn das_sta(mf_set: &[MFOutput], grid: &PolarGrid, geometry: &ArrayGeometry, c: f64) -> Result<Scanlines> {
    if mf_set.len() != geometry.n_elements() {
        return Err(Error::ShapeMismatch(format!(
            "{} transmit events for {} elements",
            mf_set.len(),
            geometry.n_elements()
        )));
    }
    let events: Vec<(usize, &MFOutput)> = mf_set.iter().enumerate().collect();
    das_sta_events(&events, grid, geometry, c)
}

/// Band-pass applied to CSF scan lines before envelope detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianBand {
    pub center_freq: f64,
    pub fractional_bw: f64,
}

impl Default for GaussianBand {
    fn default() -> Self {
        Self {
            center_freq: 7.5e6,
            fractional_bw: 0.70,
        }
    }
}

/// Conventional focused imaging: one receive-focused line per transmitted
/// beam, band-pass filtered, sampled at `ranges`.
pub fn das_csf(
    frames: &[RFFrame],
    plan: &[BeamSpec],
    ranges: &[f64],
    geometry: &ArrayGeometry,
    c: f64,
    band: GaussianBand,
) -> Result<Scanlines> {
    if frames.len() != plan.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} frames for a {}-beam plan",
            frames.len(),
            plan.len()
        )));
    }
    let grid = PolarGrid::new(plan.iter().map(|b| b.steer_deg).collect(), ranges.to_vec())?;
    let ex = geometry.element_x();
    for f in frames {
        if f.n_elements() != ex.len() {
            return Err(Error::ShapeMismatch("frame channel count differs from geometry".into()));
        }
    }
    let nr = ranges.len();
    let mut data = vec![0.0; grid.len()];
    data.par_chunks_mut(nr).enumerate().for_each(|(ia, row)| {
        let beam = plan[ia];
        let f = &frames[ia];
        let fs = f.sample_rate;
        let (fx, fz) = polar_to_xz(beam.focus_range, beam.steer_deg);
        let far = ex.iter().map(|&e| (fx - e).hypot(fz)).fold(0.0, f64::max);
        let lag = (far - beam.focus_range) / c;
        // Line at native resolution with margin for the filter.
        let dr = c / (2.0 * fs);
        let margin = 64.0 * dr;
        let r_lo = (ranges[0] - margin).max(dr);
        let n_native = ((ranges[nr - 1] + margin - r_lo) / dr).ceil() as usize + 1;
        let th = beam.steer_deg.to_radians();
        let line: Vec<f64> = (0..n_native)
            .map(|k| {
                let r = r_lo + k as f64 * dr;
                let (x, z) = (r * th.sin(), r * th.cos());
                let t_tx = r / c + lag;
                ex.iter()
                    .enumerate()
                    .map(|(i, &e)| interp(f.channel(i), (t_tx + (x - e).hypot(z) / c - f.t0) * fs))
                    .sum()
            })
            .collect();
        let filtered = dsp::filter_real_even(&line, fs, dsp::gaussian_bandpass_gain(band.center_freq, band.fractional_bw));
        for (out, &r) in row.iter_mut().zip(ranges) {
            *out = interp(&filtered, (r - r_lo) / dr);
        }
    });
    Scanlines::from_data(grid, data)
}

/// Analytic-signal magnitude along every scan line.
pub fn envelope(scanlines: &Scanlines) -> Scanlines {
    let nr = scanlines.grid.n_ranges();
    let mut data = vec![0.0; scanlines.data.len()];
    data.par_chunks_mut(nr)
        .zip(scanlines.data.par_chunks(nr))
        .for_each(|(o, l)| o.copy_from_slice(&dsp::analytic_envelope(l)));
    Scanlines {
        grid: scanlines.grid.clone(),
        data,
    }
}

/// Log-compressed image and the offset that set its mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Compressed {
    pub db: Scanlines,
    pub offset_db: f64,
}

pub const DYNAMIC_RANGE_DB: f64 = 60.0;
pub const TARGET_MEAN_DB: f64 = 32.0;

/// `20·log10(env/peak) + dr`, clipped to `[0, dr]`, then shifted by a global
/// offset so the mean of pixels above the clip floor equals `target_mean_db`.
pub fn log_compress(env: &Scanlines, dynamic_range_db: f64, target_mean_db: f64) -> Result<Compressed> {
    if env.data.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::param("envelope", "must be non-negative"));
    }
    let peak = env.data.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Degenerate("all-zero envelope".into()));
    }
    let raw: Vec<f64> = env
        .data
        .iter()
        .map(|&v| (dsp::db20(v / peak) + dynamic_range_db).clamp(0.0, dynamic_range_db))
        .collect();
    let above: Vec<f64> = raw.iter().copied().filter(|&v| v > 0.0).collect();
    let mean_at = |off: f64| {
        above.iter().map(|v| (v + off).clamp(0.0, dynamic_range_db)).sum::<f64>() / above.len() as f64
    };
    // Clipped mean is monotone in the offset: bisect.
    let mut offset = 0.0;
    if !above.is_empty() {
        let (mut lo, mut hi) = (-dynamic_range_db, dynamic_range_db);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mean_at(mid) < target_mean_db {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        offset = 0.5 * (lo + hi);
    }
    let db = raw
        .iter()
        .map(|&v| if v > 0.0 { (v + offset).clamp(0.0, dynamic_range_db) } else { 0.0 })
        .collect();
    Ok(Compressed {
        db: Scanlines {
            grid: env.grid.clone(),
            data: db,
        },
        offset_db: offset,
    })
}

/// Cartesian raster; `inside[k]` is false for background pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianImage {
    pub nx: usize,
    pub nz: usize,
    pub x0: f64,
    pub z0: f64,
    pub pixel: f64,
    pub values: Vec<f64>,
    pub inside: Vec<bool>,
}

impl CartesianImage {
    pub fn pixel_center(&self, ix: usize, iz: usize) -> (f64, f64) {
        (self.x0 + ix as f64 * self.pixel, self.z0 + iz as f64 * self.pixel)
    }

    pub fn value(&self, ix: usize, iz: usize) -> Option<f64> {
        let k = iz * self.nx + ix;
        self.inside[k].then_some(self.values[k])
    }

    /// 8-bit gray: `[0, dr]` dB mapped linearly onto `[0, 255]`, background 0.
    pub fn to_gray(&self, dynamic_range_db: f64) -> Vec<u8> {
        self.values
            .iter()
            .zip(&self.inside)
            .map(|(&v, &inside)| {
                if inside {
                    (v.clamp(0.0, dynamic_range_db) / dynamic_range_db * 255.0).round() as u8
                } else {
                    0
                }
            })
            .collect()
    }
}

/// Bilinear polar-to-Cartesian resampling at square pixels of side `pixel`.
pub fn scan_convert(polar: &Scanlines, pixel: f64) -> Result<CartesianImage> {
    if !(pixel > 0.0) {
        return Err(Error::param("pixel", "must be positive"));
    }
    let g = &polar.grid;
    let r_max = g.ranges()[g.n_ranges() - 1];
    let r_min = g.ranges()[0];
    let a_lo = g.angles_deg()[0].to_radians();
    let a_hi = g.angles_deg()[g.n_angles() - 1].to_radians();
    let x_lo = r_max * a_lo.sin().min(0.0).min(r_min / r_max * a_lo.sin());
    let x_hi = r_max * a_hi.sin().max(0.0).max(r_min / r_max * a_hi.sin());
    let z_lo = r_min * a_lo.cos().min(a_hi.cos());
    let x0 = (x_lo / pixel).floor() * pixel;
    let z0 = (z_lo / pixel).floor() * pixel;
    let nx = ((x_hi - x0) / pixel).ceil() as usize + 1;
    let nz = ((r_max - z0) / pixel).ceil() as usize + 1;
    let mut values = vec![0.0; nx * nz];
    let mut inside = vec![false; nx * nz];
    for iz in 0..nz {
        for ix in 0..nx {
            let (x, z) = (x0 + ix as f64 * pixel, z0 + iz as f64 * pixel);
            if let Some((fa, fr)) = g.locate(x, z) {
                values[iz * nx + ix] = polar.bilinear(fa, fr);
                inside[iz * nx + ix] = true;
            }
        }
    }
    Ok(CartesianImage {
        nx,
        nz,
        x0,
        z0,
        pixel,
        values,
        inside,
    })
}

/// Transmission scheme an image was formed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Dw,
    Sta,
    Csf,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Dw => "dw",
            Scheme::Sta => "sta",
            Scheme::Csf => "csf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dw" => Some(Scheme::Dw),
            "sta" => Some(Scheme::Sta),
            "csf" => Some(Scheme::Csf),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageMeta {
    pub scheme: Scheme,
    pub code_bits: usize,
    /// `r_v` for DW; `None` otherwise.
    pub r_v: Option<f64>,
}

/// Everything produced from one set of beamformed scan lines.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorImage {
    pub envelope: Scanlines,
    pub compressed: Compressed,
    pub cartesian: CartesianImage,
    pub meta: ImageMeta,
}

impl SectorImage {
    /// Envelope → 60 dB / 32 dB-mean compression → scan conversion.
    pub fn from_envelope(envelope: Scanlines, meta: ImageMeta, pixel: f64) -> Result<Self> {
        let compressed = log_compress(&envelope, DYNAMIC_RANGE_DB, TARGET_MEAN_DB)?;
        let cartesian = scan_convert(&compressed.db, pixel)?;
        Ok(Self {
            envelope,
            compressed,
            cartesian,
            meta,
        })
    }

    pub fn gray(&self) -> Vec<u8> {
        self.cartesian.to_gray(DYNAMIC_RANGE_DB)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> PolarGrid {
        PolarGrid::uniform(-30.0, 30.0, 1.0, 5e-3, 30e-3, 0.1e-3).unwrap()
    }

    #[test]
    fn gain_examples() {
        let f = RFFrame::from_samples(2, 4, vec![1.0; 8], 80e6, 0.0).unwrap();
        assert_eq!(apply_gain(&f, 0.0, 0.0, 1450.0), f);
        let g = apply_gain(&f, 22.0, 0.0, 1450.0);
        assert!(g.samples().iter().all(|&v| (v - 12.589254117941675).abs() < 1e-12));
        // A sample whose depth is exactly 2 cm.
        let t = 2.0 * 0.02 / 1450.0;
        let f2 = RFFrame::from_samples(1, 1, vec![1.0], 80e6, t).unwrap();
        let g2 = apply_gain(&f2, 0.0, 2.3, 1450.0);
        assert!((g2.samples()[0] - 10f64.powf(4.6 / 20.0)).abs() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        assert!(PolarGrid::new(vec![0.0, 0.0], vec![1e-3]).is_err());
        assert!(PolarGrid::new(vec![0.0], vec![0.0, 1e-3]).is_err());
        assert!(matches!(
            PolarGrid::new(vec![-95.0, 0.0], vec![1e-3]),
            Err(Error::OutOfRegion { .. })
        ));
        let g = PolarGrid::default_sector(60e-3, 1450.0, 80e6).unwrap();
        assert_eq!(g.n_angles(), 181);
        assert!((g.ranges()[1] - g.ranges()[0] - 4.0 * 1450.0 / 160e6).abs() < 1e-15);
    }

    #[test]
    fn zero_data_gives_zero_lines() {
        let geom = ArrayGeometry::new(8, 0.1e-3).unwrap();
        let mf = MFOutput::from_frame(RFFrame::zeros(8, 2000, 80e6, 0.0));
        let s = das_dw(&mf, 10e-3, &grid(), &geom, 1450.0).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.0));
        let sta = das_sta(&vec![mf.clone(); 8], &grid(), &geom, 1450.0).unwrap();
        assert!(sta.data().iter().all(|&v| v == 0.0));
        assert!(das_sta(&vec![mf; 3], &grid(), &geom, 1450.0).is_err());
    }

    #[test]
    fn beamformers_are_linear() {
        let geom = ArrayGeometry::new(8, 0.1e-3).unwrap();
        let n = 3000;
        let a: Vec<f64> = (0..8 * n).map(|k| ((k * 7919) % 113) as f64 / 56.0 - 1.0).collect();
        let b: Vec<f64> = (0..8 * n).map(|k| ((k * 104729) % 127) as f64 / 63.0 - 1.0).collect();
        let fa = MFOutput::from_frame(RFFrame::from_samples(8, n, a, 80e6, 0.0).unwrap());
        let fb = MFOutput::from_frame(RFFrame::from_samples(8, n, b, 80e6, 0.0).unwrap());
        let sum = MFOutput::from_frame(fa.add(&fb).unwrap());
        let g = grid();
        let ya = das_dw(&fa, 12e-3, &g, &geom, 1450.0).unwrap();
        let yb = das_dw(&fb, 12e-3, &g, &geom, 1450.0).unwrap();
        let ys = das_dw(&sum, 12e-3, &g, &geom, 1450.0).unwrap();
        let y2 = das_dw(&fa.scaled(2.0), 12e-3, &g, &geom, 1450.0).unwrap();
        let scale = ys.data().iter().map(|v| v.abs()).fold(0.0, f64::max);
        for k in 0..g.len() {
            assert!((ys.data()[k] - ya.data()[k] - yb.data()[k]).abs() <= 1e-9 * scale);
            assert!((y2.data()[k] - 2.0 * ya.data()[k]).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn sta_is_sum_of_single_source_beamformings() {
        let geom = ArrayGeometry::new(4, 0.2e-3).unwrap();
        let n = 2500;
        let mfs: Vec<MFOutput> = (0..4)
            .map(|j| {
                let d: Vec<f64> = (0..4 * n).map(|k| (((k + 31 * j) * 7919) % 101) as f64 - 50.0).collect();
                MFOutput::from_frame(RFFrame::from_samples(4, n, d, 80e6, 0.0).unwrap())
            })
            .collect();
        let g = PolarGrid::uniform(-20.0, 20.0, 2.0, 5e-3, 15e-3, 0.2e-3).unwrap();
        let sta = das_sta(&mfs, &g, &geom, 1450.0).unwrap();
        let mut acc = vec![0.0; g.len()];
        for (j, mf) in mfs.iter().enumerate() {
            let vs = VirtualSource { x: geom.element_x()[j], z: 0.0 };
            let one = das_virtual_source(mf, vs, &g, &geom, 1450.0).unwrap();
            acc.iter_mut().zip(one.data()).for_each(|(a, b)| *a += b);
            let single = das_sta_events(&[(j, mf)], &g, &geom, 1450.0).unwrap();
            assert_eq!(single.data(), one.data());
        }
        let scale = acc.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in sta.data().iter().zip(&acc) {
            assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn csf_plan_frame_count_checked() {
        let geom = ArrayGeometry::new(4, 0.1e-3).unwrap();
        let plan = crate::txprofiles::csf_scan_plan();
        let frames = vec![RFFrame::zeros(4, 100, 80e6, 0.0); 3];
        assert!(das_csf(&frames, &plan, &[1e-3, 2e-3], &geom, 1450.0, GaussianBand::default()).is_err());
        let frames = vec![RFFrame::zeros(4, 100, 80e6, 0.0); plan.len()];
        let s = das_csf(&frames, &plan, &[1e-3, 2e-3], &geom, 1450.0, GaussianBand::default()).unwrap();
        assert_eq!(s.grid.n_angles(), 181);
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn log_compress_examples() {
        let g = PolarGrid::uniform(-1.0, 1.0, 1.0, 1e-3, 10e-3, 1e-3).unwrap();
        let mut d = vec![0.1; g.len()];
        d[0] = 1.0;
        d[1] = 1e-3;
        d[2] = 1e-4;
        let env = Scanlines::from_data(g.clone(), d).unwrap();
        let plain = log_compress(&env, 60.0, 30.0).unwrap();
        assert!((plain.db.data()[0] - 60.0 - plain.offset_db).abs() < 1e-9 || plain.db.data()[0] == 60.0);
        assert_eq!(plain.db.data()[2], 0.0);
        // 1e-3 of peak sits exactly on the clip floor before the offset.
        let raw = dsp::db20(1e-3) + 60.0;
        assert!(raw.abs() < 1e-9);
        let c = log_compress(&env, 60.0, 32.0).unwrap();
        let above: Vec<f64> = c.db.data().iter().copied().filter(|&v| v > 0.0).collect();
        let mean = above.iter().sum::<f64>() / above.len() as f64;
        assert!((mean - 32.0).abs() < 0.5, "{mean}");
        assert!(c.db.data().iter().all(|&v| (0.0..=60.0).contains(&v)));
        let zero = Scanlines::zeros(g);
        assert!(log_compress(&zero, 60.0, 32.0).is_err());
    }

    #[test]
    fn uniform_polar_image_converts_to_uniform_sector() {
        let g = PolarGrid::uniform(-45.0, 45.0, 0.5, 5e-3, 40e-3, 0.1e-3).unwrap();
        let img = Scanlines::from_data(g.clone(), vec![7.0; g.len()]).unwrap();
        let cart = scan_convert(&img, 0.2e-3).unwrap();
        let mut n_in = 0;
        for iz in 0..cart.nz {
            for ix in 0..cart.nx {
                let (x, z) = cart.pixel_center(ix, iz);
                let inside = g.locate(x, z).is_some();
                assert_eq!(cart.inside[iz * cart.nx + ix], inside);
                if inside {
                    n_in += 1;
                    assert!((cart.value(ix, iz).unwrap() - 7.0).abs() < 1e-12);
                }
            }
        }
        assert!(n_in > 1000);
        let gray = cart.to_gray(60.0);
        assert!(gray.iter().zip(&cart.inside).all(|(&p, &i)| i || p == 0));
    }

    #[test]
    fn bright_cell_lands_at_its_cartesian_position() {
        let g = PolarGrid::uniform(-45.0, 45.0, 0.5, 5e-3, 40e-3, 0.1e-3).unwrap();
        let mut img = Scanlines::zeros(g.clone());
        let (ia, ir) = (120, 200); // 15°, 25 mm
        img.data[ia * g.n_ranges() + ir] = 1.0;
        let cart = scan_convert(&img, 0.05e-3).unwrap();
        let (mut best, mut pos) = (0.0, (0.0, 0.0));
        for iz in 0..cart.nz {
            for ix in 0..cart.nx {
                if let Some(v) = cart.value(ix, iz) {
                    if v > best {
                        best = v;
                        pos = cart.pixel_center(ix, iz);
                    }
                }
            }
        }
        let (x, z) = g.point(ia, ir);
        assert!((pos.0 - x).abs() <= cart.pixel && (pos.1 - z).abs() <= cart.pixel);
    }

    #[test]
    fn smooth_pattern_survives_round_trip() {
        let g = PolarGrid::uniform(-45.0, 45.0, 0.5, 5e-3, 40e-3, 0.1e-3).unwrap();
        let f = |a: f64, r: f64| 2.0 + (a.to_radians() * 2.0).cos() * (r * 100.0).sin();
        let mut data = Vec::with_capacity(g.len());
        for &a in g.angles_deg() {
            for &r in g.ranges() {
                data.push(f(a, r));
            }
        }
        let img = Scanlines::from_data(g.clone(), data).unwrap();
        let cart = scan_convert(&img, 0.1e-3).unwrap();
        // Sample back at polar nodes from the nearest Cartesian pixel.
        for ia in (4..g.n_angles() - 4).step_by(7) {
            for ir in (10..g.n_ranges() - 10).step_by(13) {
                let (x, z) = g.point(ia, ir);
                let ix = ((x - cart.x0) / cart.pixel).round() as usize;
                let iz = ((z - cart.z0) / cart.pixel).round() as usize;
                let v = cart.value(ix, iz).unwrap();
                let want = img.get(ia, ir);
                assert!((v - want).abs() <= 0.02 * want.abs(), "{v} vs {want}");
            }
        }
    }
}
