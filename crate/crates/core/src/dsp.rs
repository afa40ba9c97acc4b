//! FFT plumbing shared by the simulator, receiver and beamformer.

use std::f64::consts::{LN_10, PI};

use num_complex::Complex64;
use rustfft::FftPlanner;

pub(crate) fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

pub(crate) fn fft_in_place(buf: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(buf.len()).process(buf);
}

/// Unnormalized inverse; caller divides by `len`.
pub(crate) fn ifft_in_place(buf: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(buf.len()).process(buf);
}

pub(crate) fn spectrum(signal: &[f64], n_fft: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (b, &s) in buf.iter_mut().zip(signal) {
        b.re = s;
    }
    fft_in_place(&mut buf);
    buf
}

/// Applies a real, even frequency response `gain(f_hz)` to a real signal.
/// The signal is zero-padded to at least twice its length so the response
/// does not wrap; output has the input's length.
pub fn filter_real_even(signal: &[f64], sample_rate: f64, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    if signal.is_empty() {
        return Vec::new();
    }
    let n_fft = next_pow2(2 * signal.len());
    // Center the signal so symmetric kernel tails spill into the padding on both sides.
    let lead = (n_fft - signal.len()) / 2;
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for (k, &s) in signal.iter().enumerate() {
        buf[lead + k].re = s;
    }
    fft_in_place(&mut buf);
    let df = sample_rate / n_fft as f64;
    for (k, b) in buf.iter_mut().enumerate() {
        let kk = if k <= n_fft / 2 { k } else { n_fft - k };
        *b *= gain(kk as f64 * df);
    }
    ifft_in_place(&mut buf);
    let scale = 1.0 / n_fft as f64;
    buf[lead..lead + signal.len()].iter().map(|c| c.re * scale).collect()
}

/// Nepers per (Hz · m) for an attenuation given in dB/(MHz·cm).
pub fn nepers_per_hz_m(alpha_db_mhz_cm: f64) -> f64 {
    alpha_db_mhz_cm * LN_10 / 20.0 * 1e-6 * 100.0
}

/// Magnitude of the analytic signal, computed with a frequency-domain Hilbert transform.
pub fn analytic_envelope(signal: &[f64]) -> Vec<f64> {
    let n = signal.len();
    if n == 0 {
        return Vec::new();
    }
    let n_fft = next_pow2(n);
    let mut buf = spectrum(signal, n_fft);
    // One-sided spectrum: keep DC and Nyquist, double positive, zero negative.
    for (k, b) in buf.iter_mut().enumerate() {
        if k == 0 || (n_fft.is_multiple_of(2) && k == n_fft / 2) {
            continue;
        } else if k < n_fft / 2 {
            *b *= 2.0;
        } else {
            *b = Complex64::new(0.0, 0.0);
        }
    }
    ifft_in_place(&mut buf);
    let scale = 1.0 / n_fft as f64;
    buf[..n].iter().map(|c| c.norm() * scale).collect()
}

/// Amplitude-Gaussian band-pass centered at `center_hz` whose −6 dB full width
/// is `fractional_bw · center_hz`.
pub fn gaussian_bandpass_gain(center_hz: f64, fractional_bw: f64) -> impl Fn(f64) -> f64 {
    let sigma = gaussian_sigma_f(center_hz, fractional_bw);
    move |f: f64| (-(f - center_hz).powi(2) / (2.0 * sigma * sigma)).exp()
}

/// Standard deviation, in Hz, of an amplitude Gaussian with the given −6 dB fractional bandwidth.
pub fn gaussian_sigma_f(center_hz: f64, fractional_bw: f64) -> f64 {
    fractional_bw * center_hz / (2.0 * (2.0 * 2f64.ln()).sqrt())
}

pub(crate) fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub(crate) fn db20(x: f64) -> f64 {
    20.0 * x.log10()
}

pub(crate) fn two_pi() -> f64 {
    2.0 * PI
}
