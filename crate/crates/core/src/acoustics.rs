//! Point-scatterer pulse-echo simulation.
//!
//! Received data are synthesized in the frequency domain. For a scatterer at
//! `s`, transmit element `j` and receive element `i`, the path contributes
//!
//! ```text
//! refl · H(f) · X(f) · e^{-a f (d_js + d_si)} · e^{-j2πf(τ_j + (d_js + d_si)/c)} / (d_js · d_si)
//! ```
//!
//! where `H` is the two-way element response, `X` the excitation spectrum and
//! `a` the attenuation in Np/(Hz·m). Both the attenuation and the phase factor
//! split into a transmit part and a receive part, so the sum over `j` is done
//! once per scatterer and reused for every receive channel. Delays and
//! attenuation are therefore exact per path; nothing is binned.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;

use crate::dsp::{self, nepers_per_hz_m};
use crate::error::{Error, Result};
use crate::txprofiles::{ArrayGeometry, DelayProfile};

/// Propagation medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Medium {
    /// m/s
    pub sound_speed: f64,
    /// dB/(MHz·cm); zero models fresh water.
    pub attenuation: f64,
}

impl Medium {
    pub fn new(sound_speed: f64, attenuation: f64) -> Result<Self> {
        if !(sound_speed > 0.0) || !sound_speed.is_finite() {
            return Err(Error::param("sound_speed", "must be positive"));
        }
        if !(attenuation >= 0.0) || !attenuation.is_finite() {
            return Err(Error::param("attenuation", "must be non-negative"));
        }
        Ok(Self {
            sound_speed,
            attenuation,
        })
    }

    pub fn lossless(&self) -> Self {
        Self {
            attenuation: 0.0,
            ..*self
        }
    }
}

impl Default for Medium {
    fn default() -> Self {
        Self {
            sound_speed: 1450.0,
            attenuation: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scatterer {
    pub x: f64,
    pub z: f64,
    pub reflectivity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub scatterers: Vec<Scatterer>,
    pub medium: Medium,
    pub label: String,
}

impl Phantom {
    pub fn new(scatterers: Vec<Scatterer>, medium: Medium, label: impl Into<String>) -> Result<Self> {
        for s in &scatterers {
            if !(s.z > 0.0) || !s.x.is_finite() || !s.z.is_finite() {
                return Err(Error::OutOfRegion {
                    x_mm: s.x * 1e3,
                    z_mm: s.z * 1e3,
                    what: "behind or on the array plane",
                });
            }
            if !s.reflectivity.is_finite() {
                return Err(Error::param("reflectivity", "must be finite"));
            }
        }
        Ok(Self {
            scatterers,
            medium,
            label: label.into(),
        })
    }

    pub fn empty(medium: Medium) -> Self {
        Self {
            scatterers: Vec::new(),
            medium,
            label: "empty".into(),
        }
    }

    /// Concatenates scatterer lists; the medium of `self` is kept.
    pub fn union(&self, other: &Phantom) -> Phantom {
        let mut scatterers = self.scatterers.clone();
        scatterers.extend_from_slice(&other.scatterers);
        Phantom {
            scatterers,
            medium: self.medium,
            label: format!("{}+{}", self.label, other.label),
        }
    }
}

/// Per-channel receive data for one transmit event, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RFFrame {
    n_elements: usize,
    n_samples: usize,
    samples: Vec<f64>,
    pub sample_rate: f64,
    pub t0: f64,
}

impl RFFrame {
    pub fn zeros(n_elements: usize, n_samples: usize, sample_rate: f64, t0: f64) -> Self {
        Self {
            n_elements,
            n_samples,
            samples: vec![0.0; n_elements * n_samples],
            sample_rate,
            t0,
        }
    }

    pub fn from_samples(
        n_elements: usize,
        n_samples: usize,
        samples: Vec<f64>,
        sample_rate: f64,
        t0: f64,
    ) -> Result<Self> {
        if samples.len() != n_elements * n_samples {
            return Err(Error::ShapeMismatch(format!(
                "{} samples for {n_elements} x {n_samples} frame",
                samples.len()
            )));
        }
        if !(sample_rate > 0.0) {
            return Err(Error::param("sample_rate", "must be positive"));
        }
        Ok(Self {
            n_elements,
            n_samples,
            samples,
            sample_rate,
            t0,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.samples[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.samples[i * self.n_samples..(i + 1) * self.n_samples]
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks(self.n_samples.max(1)).take(self.n_elements)
    }

    pub(crate) fn channels_mut(&mut self) -> std::slice::ChunksMut<'_, f64> {
        self.samples.chunks_mut(self.n_samples.max(1))
    }

    /// Time of sample `n`.
    pub fn time_of(&self, n: usize) -> f64 {
        self.t0 + n as f64 / self.sample_rate
    }

    /// Sample-wise sum; shapes and time bases must agree.
    pub fn add(&self, other: &RFFrame) -> Result<RFFrame> {
        if self.n_elements != other.n_elements
            || self.n_samples != other.n_samples
            || self.sample_rate != other.sample_rate
            || self.t0 != other.t0
        {
            return Err(Error::ShapeMismatch("frames differ in shape or time base".into()));
        }
        let mut out = self.clone();
        out.samples
            .iter_mut()
            .zip(&other.samples)
            .for_each(|(a, b)| *a += b);
        Ok(out)
    }

    pub fn scaled(&self, k: f64) -> RFFrame {
        let mut out = self.clone();
        out.samples.iter_mut().for_each(|v| *v *= k);
        out
    }
}

/// Two-way (transmit and receive) element impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementResponse {
    /// Zero-phase: sample `center` corresponds to t = 0.
    pub impulse: Vec<f64>,
    pub center: usize,
    pub center_freq: f64,
    pub fractional_bandwidth: f64,
    pub sample_rate: f64,
}

/// Gaussian-enveloped cosine with the requested −6 dB fractional bandwidth, unit energy.
pub fn element_impulse_response(center_freq: f64, fractional_bw: f64, sample_rate: f64) -> Result<ElementResponse> {
    if !(fractional_bw > 0.0 && fractional_bw < 2.0) {
        return Err(Error::param("fractional_bw", "must lie in (0, 2)"));
    }
    if !(center_freq > 0.0) {
        return Err(Error::param("center_freq", "must be positive"));
    }
    if !(sample_rate >= 4.0 * center_freq) {
        return Err(Error::param(
            "sample_rate",
            format!("{sample_rate} Hz is below 4x the center frequency"),
        ));
    }
    let sigma_t = 1.0 / (dsp::two_pi() * dsp::gaussian_sigma_f(center_freq, fractional_bw));
    let half = (5.0 * sigma_t * sample_rate).ceil() as usize;
    let mut impulse: Vec<f64> = (0..=2 * half)
        .map(|n| {
            let t = (n as f64 - half as f64) / sample_rate;
            (-t * t / (2.0 * sigma_t * sigma_t)).exp() * (dsp::two_pi() * center_freq * t).cos()
        })
        .collect();
    let norm = dsp::energy(&impulse).sqrt();
    impulse.iter_mut().for_each(|v| *v /= norm);
    Ok(ElementResponse {
        impulse,
        center: half,
        center_freq,
        fractional_bandwidth: fractional_bw,
        sample_rate,
    })
}

/// Zero-phase attenuation over `path_length_cm` of travel: each frequency is
/// scaled by `10^(−alpha · f[MHz] · path / 20)`.
pub fn attenuation_filter(signal: &[f64], path_length_cm: f64, alpha: f64, sample_rate: f64) -> Result<Vec<f64>> {
    if !(path_length_cm >= 0.0) {
        return Err(Error::param("path_length", "must be non-negative"));
    }
    if path_length_cm == 0.0 || alpha == 0.0 {
        return Ok(signal.to_vec());
    }
    Ok(dsp::filter_real_even(signal, sample_rate, |f| {
        10f64.powf(-alpha * (f / 1e6) * path_length_cm / 20.0)
    }))
}

/// Acquisition settings shared by every simulated transmit event.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquisition {
    pub geometry: ArrayGeometry,
    pub response: ElementResponse,
    pub sample_rate: f64,
    pub n_samples: usize,
    pub t0: f64,
}

impl Acquisition {
    /// Record long enough for round trips to `max_depth` plus `tail` seconds.
    pub fn for_depth(
        geometry: ArrayGeometry,
        response: ElementResponse,
        max_depth: f64,
        sound_speed: f64,
        tail: f64,
    ) -> Self {
        let sample_rate = response.sample_rate;
        let n_samples = ((2.0 * max_depth / sound_speed + tail) * sample_rate).ceil() as usize;
        Self {
            geometry,
            response,
            sample_rate,
            n_samples,
            t0: 0.0,
        }
    }
}

/// Medium transfer spectra `G_i(f)` for one transmit profile and phantom,
/// before the excitation and element response are applied.
#[derive(Debug, Clone)]
pub struct ChannelSpectra {
    n_fft: usize,
    k_lo: usize,
    spectra: Vec<Vec<Complex64>>,
    response_bins: Vec<Complex64>,
    n_samples: usize,
    sample_rate: f64,
    t0: f64,
}

const BAND_FLOOR: f64 = 1e-6;
const RESEED: usize = 128;

fn delay_sample_bound(max_delay: f64, fs: f64) -> usize {
    (max_delay * fs).ceil().max(0.0) as usize
}

/// Adds `amp · e^{-(a_path + j2π delay) f_k}` over the band into `acc`,
/// optionally multiplied bin-wise by `weight`.
fn accumulate_phasor(
    acc: &mut [Complex64],
    weight: Option<&[Complex64]>,
    amp: f64,
    decay: f64,
    delay: f64,
    f_lo: f64,
    df: f64,
) {
    let rate = Complex64::new(-decay, -dsp::two_pi() * delay);
    let step = (rate * df).exp();
    let mut z = Complex64::new(0.0, 0.0);
    for (k, a) in acc.iter_mut().enumerate() {
        if k % RESEED == 0 {
            z = (rate * (f_lo + k as f64 * df)).exp() * amp;
        }
        match weight {
            Some(w) => *a += w[k] * z,
            None => *a += z,
        }
        z *= step;
    }
}

impl ChannelSpectra {
    /// Propagates one transmit event through the phantom.
    pub fn compute(tx: &DelayProfile, phantom: &Phantom, acq: &Acquisition) -> Result<Self> {
        let geom = &acq.geometry;
        if geom.n_elements() == 0 {
            return Err(Error::Degenerate("empty geometry".into()));
        }
        if tx.delays.len() != geom.n_elements() {
            return Err(Error::ShapeMismatch(format!(
                "{} delays for {} elements",
                tx.delays.len(),
                geom.n_elements()
            )));
        }
        let c = phantom.medium.sound_speed;
        let fs = acq.sample_rate;
        let active = tx.active_elements();
        let ex = geom.element_x();

        // FFT length depends only on the acquisition so that separately
        // simulated phantoms superpose exactly. Scatterers whose earliest
        // echo starts after the record (plus the response tail) are skipped;
        // everything else lands inside the padded buffer without wrapping.
        let resp_len = acq.response.impulse.len();
        let aperture_span = delay_sample_bound(2.0 * geom.aperture() / c, fs);
        let tx_span = delay_sample_bound(tx.delays.iter().copied().fold(0.0, f64::max), fs);
        let n_fft = dsp::next_pow2(2 * acq.n_samples + aperture_span + tx_span + 4 * resp_len + 1024);
        let record_end = acq.t0 + (acq.n_samples + resp_len) as f64 / fs;
        let min_tx_delay = active.iter().map(|&j| tx.delays[j]).fold(f64::INFINITY, f64::min);
        let visible = |s: &Scatterer| {
            let near_tx = active
                .iter()
                .map(|&j| ((s.x - ex[j]).powi(2) + s.z * s.z).sqrt())
                .fold(f64::INFINITY, f64::min);
            let near_rx = ex
                .iter()
                .map(|&x| ((s.x - x).powi(2) + s.z * s.z).sqrt())
                .fold(f64::INFINITY, f64::min);
            min_tx_delay + (near_tx + near_rx) / c <= record_end
        };

        let (k_lo, response_bins) = response_band(&acq.response, n_fft);
        let n_bins = response_bins.len();
        let df = fs / n_fft as f64;
        let f_lo = k_lo as f64 * df;
        let a = nepers_per_hz_m(phantom.medium.attenuation);

        let mut spectra = vec![vec![Complex64::new(0.0, 0.0); n_bins]; geom.n_elements()];
        let mut tx_field = vec![Complex64::new(0.0, 0.0); n_bins];
        for s in &phantom.scatterers {
            if s.reflectivity == 0.0 || !visible(s) {
                continue;
            }
            tx_field.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for &j in &active {
                let d = ((s.x - ex[j]).powi(2) + s.z * s.z).sqrt();
                accumulate_phasor(
                    &mut tx_field,
                    None,
                    s.reflectivity / d,
                    a * d,
                    tx.delays[j] + d / c,
                    f_lo,
                    df,
                );
            }
            let field = &tx_field;
            spectra.par_iter_mut().enumerate().for_each(|(i, acc)| {
                let d = ((s.x - ex[i]).powi(2) + s.z * s.z).sqrt();
                accumulate_phasor(acc, Some(field), 1.0 / d, a * d, d / c - acq.t0, f_lo, df);
            });
        }
        Ok(Self {
            n_fft,
            k_lo,
            spectra,
            response_bins,
            n_samples: acq.n_samples,
            sample_rate: fs,
            t0: acq.t0,
        })
    }

    /// Renders the noiseless frame produced by firing `waveform`.
    pub fn render(&self, waveform: &[f64]) -> RFFrame {
        let x = dsp::spectrum(waveform, self.n_fft);
        let band: Vec<Complex64> = self
            .response_bins
            .iter()
            .enumerate()
            .map(|(k, h)| h * x[self.k_lo + k])
            .collect();
        let n_fft = self.n_fft;
        let n_samples = self.n_samples;
        let mut frame = RFFrame::zeros(self.spectra.len(), n_samples, self.sample_rate, self.t0);
        frame
            .channels_mut()
            .zip(&self.spectra)
            .collect::<Vec<_>>()
            .into_par_iter()
            .for_each(|(out, g)| {
                let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
                for (k, (gk, pk)) in g.iter().zip(&band).enumerate() {
                    let bin = self.k_lo + k;
                    let v = gk * pk;
                    buf[bin] = v;
                    if bin != 0 && bin != n_fft / 2 {
                        buf[n_fft - bin] = v.conj();
                    }
                }
                dsp::ifft_in_place(&mut buf);
                let scale = 1.0 / n_fft as f64;
                for (o, b) in out.iter_mut().zip(&buf[..n_samples]) {
                    *o = b.re * scale;
                }
            });
        frame
    }
}

/// Band of bins where the two-way response is above `BAND_FLOOR` of its peak,
/// with the response spectrum (zero-phase about `center`) on that band.
fn response_band(resp: &ElementResponse, n_fft: usize) -> (usize, Vec<Complex64>) {
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (n, &v) in resp.impulse.iter().enumerate() {
        let idx = (n as isize - resp.center as isize).rem_euclid(n_fft as isize) as usize;
        buf[idx].re += v;
    }
    dsp::fft_in_place(&mut buf);
    let half = &buf[..=n_fft / 2];
    let peak = half.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let lo = half.iter().position(|c| c.norm() > BAND_FLOOR * peak).unwrap_or(0).max(1);
    let hi = half
        .iter()
        .rposition(|c| c.norm() > BAND_FLOOR * peak)
        .unwrap_or(0)
        .min(n_fft / 2 - 1);
    (lo, half[lo..=hi.max(lo)].to_vec())
}

/// Adds white Gaussian noise of variance `noise_power`, channel by channel in index order.
pub fn add_noise(frame: &mut RFFrame, noise_power: f64, seed: u64) -> Result<()> {
    if !(noise_power >= 0.0) {
        return Err(Error::param("noise_power", "must be non-negative"));
    }
    if noise_power == 0.0 {
        return Ok(());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_power.sqrt()).map_err(|e| Error::param("noise_power", e.to_string()))?;
    for v in frame.samples.iter_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(())
}

/// Noise-only frame (no transmission).
pub fn noise_frame(acq: &Acquisition, noise_power: f64, seed: u64) -> Result<RFFrame> {
    let mut f = RFFrame::zeros(acq.geometry.n_elements(), acq.n_samples, acq.sample_rate, acq.t0);
    add_noise(&mut f, noise_power, seed)?;
    Ok(f)
}

/// Simulates one transmit event: `excitation_waveform` fired with `tx_delays`.
pub fn simulate_rx(
    excitation_waveform: &[f64],
    tx_delays: &DelayProfile,
    phantom: &Phantom,
    acq: &Acquisition,
    noise_power: f64,
    seed: u64,
) -> Result<RFFrame> {
    let spectra = ChannelSpectra::compute(tx_delays, phantom, acq)?;
    let mut frame = spectra.render(excitation_waveform);
    add_noise(&mut frame, noise_power, seed)?;
    Ok(frame)
}

/// Echo received by element `element` from an infinite planar reflector at
/// depth `depth`, treated as an image source at `2·depth`.
pub fn plane_reflector_echo(
    waveform: &[f64],
    response: &ElementResponse,
    depth: f64,
    medium: &Medium,
    n_samples: usize,
) -> Vec<f64> {
    let fs = response.sample_rate;
    let path = 2.0 * depth;
    let delay = path / medium.sound_speed;
    let n_fft = dsp::next_pow2(n_samples.max(delay_sample_bound(delay, fs)) + waveform.len() + 4 * response.impulse.len() + 64);
    let (k_lo, h) = response_band(response, n_fft);
    let x = dsp::spectrum(waveform, n_fft);
    let df = fs / n_fft as f64;
    let mut g = vec![Complex64::new(0.0, 0.0); h.len()];
    accumulate_phasor(
        &mut g,
        Some(&h),
        1.0 / path,
        nepers_per_hz_m(medium.attenuation) * path,
        delay,
        k_lo as f64 * df,
        df,
    );
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (k, v) in g.iter().enumerate() {
        let bin = k_lo + k;
        let v = v * x[bin];
        buf[bin] = v;
        buf[n_fft - bin] = v.conj();
    }
    dsp::ifft_in_place(&mut buf);
    buf[..n_samples].iter().map(|c| c.re / n_fft as f64).collect()
}

/// Named pin layouts.
pub const PIN_PRESETS: [&str; 5] = [
    "vertical_pins",
    "horizontal_pins_20mm",
    "horizontal_pins_25mm",
    "horizontal_pins_40mm",
    "full_model550",
];

const PIN_REFLECTIVITY: f64 = 1.0;

fn pin_row(depth: f64) -> Vec<(f64, f64)> {
    (-4..=4).map(|k| (k as f64 * 5e-3, depth)).collect()
}

/// Pin positions `(x, z)` for a preset.
pub fn pin_positions(preset: &str) -> Result<Vec<(f64, f64)>> {
    let vertical: Vec<(f64, f64)> = (1..=12).map(|k| (0.0, k as f64 * 5e-3)).collect();
    let pins = match preset {
        "vertical_pins" => vertical,
        "horizontal_pins_20mm" => pin_row(20e-3),
        "horizontal_pins_25mm" => pin_row(25e-3),
        "horizontal_pins_40mm" => pin_row(40e-3),
        "full_model550" => {
            let mut all = vertical;
            for row in [20e-3, 25e-3, 40e-3] {
                for p in pin_row(row) {
                    if p.0 != 0.0 {
                        all.push(p);
                    }
                }
            }
            all
        }
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(pins)
}

/// Pin-target phantom. Rows hold nine pins 5 mm apart centered on the axis;
/// the vertical column runs from 5 to 60 mm in 5 mm steps.
pub fn make_pin_phantom(preset: &str, medium: Medium) -> Result<Phantom> {
    let scatterers = pin_positions(preset)?
        .into_iter()
        .map(|(x, z)| Scatterer {
            x,
            z,
            reflectivity: PIN_REFLECTIVITY,
        })
        .collect();
    Phantom::new(scatterers, medium, preset)
}

/// Axis-aligned region in the imaging plane, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Rect {
    pub fn area_mm2(&self) -> f64 {
        (self.x_max - self.x_min) * (self.z_max - self.z_min) * 1e6
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cyst {
    pub x: f64,
    pub z: f64,
    pub diameter: f64,
}

impl Cyst {
    pub fn contains(&self, x: f64, z: f64) -> bool {
        (x - self.x).powi(2) + (z - self.z).powi(2) < (self.diameter / 2.0).powi(2)
    }
}

/// Uniformly placed scatterers with N(0, 1) reflectivities; cyst interiors are emptied.
pub fn make_speckle_phantom(
    region: Rect,
    scatterers_per_mm2: f64,
    cysts: &[Cyst],
    seed: u64,
    medium: Medium,
) -> Result<Phantom> {
    if !(scatterers_per_mm2 > 0.0) {
        return Err(Error::param("density", "must be positive"));
    }
    if !(region.x_max > region.x_min && region.z_max > region.z_min && region.z_min > 0.0) {
        return Err(Error::param("region", "must be a non-empty rectangle in front of the array"));
    }
    let count = (region.area_mm2() * scatterers_per_mm2).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ux = Uniform::new(region.x_min, region.x_max).map_err(|e| Error::param("region", e.to_string()))?;
    let uz = Uniform::new(region.z_min, region.z_max).map_err(|e| Error::param("region", e.to_string()))?;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let scatterers = (0..count)
        .map(|_| Scatterer {
            x: ux.sample(&mut rng),
            z: uz.sample(&mut rng),
            reflectivity: normal.sample(&mut rng),
        })
        .filter(|s| !cysts.iter().any(|c| c.contains(s.x, s.z)))
        .collect();
    Phantom::new(scatterers, medium, format!("speckle(seed={seed})"))
}
