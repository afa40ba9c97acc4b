//! Correlation receiver: reference extraction, depth-indexed attenuation
//! compensation, per-channel matched filtering and Golay pair combination.

use std::ops::Deref;

use rayon::prelude::*;

use crate::acoustics::{attenuation_filter, plane_reflector_echo, ElementResponse, Medium, RFFrame};
use crate::codes::Excitation;
use crate::dsp;
use crate::error::{Error, Result};
use crate::txprofiles::ArrayGeometry;

/// Number of depth-indexed references.
pub const BANK_SIZE: usize = 12;
/// Depth spacing of the references.
pub const DEPTH_STEP: f64 = 5e-3;
/// Depth of the planar reflector used for reference extraction.
pub const REFLECTOR_DEPTH: f64 = 40e-3;
/// Envelope fraction of the peak that bounds the cropped echo.
pub const CROP_FRACTION: f64 = 0.01;

/// Which transmitted waveform a reference belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeSeq {
    Pulse,
    A,
    B,
}

/// A cropped two-way echo used as correlation template.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedReference {
    pub samples: Vec<f64>,
    /// Time of the first template sample relative to the geometric echo arrival.
    pub onset: f64,
    pub sample_rate: f64,
    pub seq: CodeSeq,
    pub chips: usize,
}

/// Fires every waveform of `excitation` from the mid element at a planar
/// reflector 40 mm away in a lossless medium and crops each echo to the span
/// where its envelope exceeds 1 % of the peak.
pub fn extract_reference(
    excitation: &Excitation,
    geometry: &ArrayGeometry,
    response: &ElementResponse,
    medium: &Medium,
) -> Result<Vec<ExtractedReference>> {
    if geometry.n_elements() == 0 {
        return Err(Error::Degenerate("empty geometry".into()));
    }
    let water = medium.lossless();
    let fs = response.sample_rate;
    if (excitation.sample_rate() - fs).abs() > 1e-6 * fs {
        return Err(Error::param("sample_rate", "excitation and element response disagree"));
    }
    let arrival = 2.0 * REFLECTOR_DEPTH / water.sound_speed;
    let seqs = match excitation {
        Excitation::Pulse { .. } => vec![CodeSeq::Pulse],
        Excitation::Golay(_) => vec![CodeSeq::A, CodeSeq::B],
    };
    excitation
        .waveforms()
        .into_iter()
        .zip(seqs)
        .map(|(w, seq)| {
            let n = (arrival * fs).ceil() as usize + w.len() + 2 * response.impulse.len() + 64;
            let echo = plane_reflector_echo(w, response, REFLECTOR_DEPTH, &water, n);
            let env = dsp::analytic_envelope(&echo);
            let peak = env.iter().copied().fold(0.0, f64::max);
            if !(peak > 0.0) {
                return Err(Error::Degenerate("excitation produced no echo".into()));
            }
            let first = env.iter().position(|&v| v > CROP_FRACTION * peak).unwrap_or(0);
            let last = env.iter().rposition(|&v| v > CROP_FRACTION * peak).unwrap_or(first);
            Ok(ExtractedReference {
                samples: echo[first..=last].to_vec(),
                onset: first as f64 / fs - arrival,
                sample_rate: fs,
                seq,
                chips: excitation.chips(),
            })
        })
        .collect()
}

/// Depth-indexed references for one transmitted sequence.
///
/// `refs[r-1]` compensates the round trip to depth `r · 5 mm`, i.e. a path of
/// `r` cm. The uncompensated water shape is kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBank {
    refs: Vec<Vec<f64>>,
    water: Vec<f64>,
    pub depth_step: f64,
    pub seq: CodeSeq,
    pub chips: usize,
    pub onset: f64,
    pub sample_rate: f64,
}

fn scaled_to_energy(x: &[f64], target: f64) -> Result<Vec<f64>> {
    let e = dsp::energy(x);
    if !(e > 0.0) {
        return Err(Error::Degenerate("reference has zero energy".into()));
    }
    let k = (target / e).sqrt();
    Ok(x.iter().map(|v| v * k).collect())
}

/// Attenuates the water reference for each depth bin, then normalizes each
/// reference to unit energy and scales it to an energy equal to its chip count.
pub fn build_reference_bank(base: &ExtractedReference, medium: &Medium) -> Result<ReferenceBank> {
    let chips = base.chips as f64;
    let water = scaled_to_energy(&base.samples, chips)?;
    let refs = (1..=BANK_SIZE)
        .map(|r| {
            let path_cm = 2.0 * r as f64 * DEPTH_STEP * 100.0;
            let att = attenuation_filter(&base.samples, path_cm, medium.attenuation, base.sample_rate)?;
            scaled_to_energy(&att, chips)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferenceBank {
        refs,
        water,
        depth_step: DEPTH_STEP,
        seq: base.seq,
        chips: base.chips,
        onset: base.onset,
        sample_rate: base.sample_rate,
    })
}

impl ReferenceBank {
    /// A bank whose every depth bin uses `samples` unchanged.
    pub fn single(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Degenerate("empty reference".into()));
        }
        Ok(Self {
            refs: vec![samples.clone(); BANK_SIZE],
            water: samples,
            depth_step: DEPTH_STEP,
            seq: CodeSeq::Pulse,
            chips: 1,
            onset: 0.0,
            sample_rate,
        })
    }

    /// The same bank with the water reference in every depth bin.
    pub fn uncompensated(&self) -> Self {
        Self {
            refs: vec![self.water.clone(); BANK_SIZE],
            ..self.clone()
        }
    }

    /// Reference for 1-based depth bin `r`.
    pub fn reference(&self, r: usize) -> &[f64] {
        &self.refs[r - 1]
    }

    pub fn water(&self) -> &[f64] {
        &self.water
    }

    pub fn refs(&self) -> &[Vec<f64>] {
        &self.refs
    }

    /// 1-based bin: `clamp(floor(depth / step) + 1, 1, 12)`.
    pub fn bin_for_depth(&self, depth: f64) -> usize {
        let r = (depth / self.depth_step).floor() + 1.0;
        if r.is_nan() || r < 1.0 {
            1
        } else {
            (r as usize).min(BANK_SIZE)
        }
    }

    /// Bank as a frame with one "channel" per depth bin, zero-padded to the
    /// longest reference.
    pub fn to_frame(&self) -> RFFrame {
        let k = self.refs.iter().map(Vec::len).max().unwrap_or(0);
        let mut f = RFFrame::zeros(self.refs.len(), k, self.sample_rate, self.onset);
        for (r, s) in self.refs.iter().enumerate() {
            f.channel_mut(r)[..s.len()].copy_from_slice(s);
        }
        f
    }
}

/// Correlator output. Same shape as the input frame; `t0` is shifted by the
/// reference onset so that an echo's peak sits at its geometric arrival time.
#[derive(Debug, Clone, PartialEq)]
pub struct MFOutput(RFFrame);

impl MFOutput {
    pub fn from_frame(frame: RFFrame) -> Self {
        Self(frame)
    }

    pub fn into_frame(self) -> RFFrame {
        self.0
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self(self.0.scaled(k))
    }
}

impl Deref for MFOutput {
    type Target = RFFrame;
    fn deref(&self) -> &RFFrame {
        &self.0
    }
}

fn correlate_channel(y: &[f64], bins: &[usize], bank: &ReferenceBank, out: &mut [f64]) {
    let n = y.len();
    for m in 0..n {
        let s = bank.reference(bins[m]);
        let k_max = s.len().min(n - m);
        out[m] = y[m..m + k_max].iter().zip(&s[..k_max]).map(|(a, b)| a * b).sum();
    }
}

/// Sliding correlation `R_i(m) = Σ_k y_i(m+k) s_r(k)` with the reference
/// selected by the depth of output sample `m`; samples past the frame are zero.
pub fn matched_filter(frame: &RFFrame, bank: &ReferenceBank, c: f64) -> Result<MFOutput> {
    if (frame.sample_rate - bank.sample_rate).abs() > 1e-9 * bank.sample_rate {
        return Err(Error::ShapeMismatch(format!(
            "frame sampled at {} Hz, references at {} Hz",
            frame.sample_rate, bank.sample_rate
        )));
    }
    if !(c > 0.0) {
        return Err(Error::param("sound_speed", "must be positive"));
    }
    let bins: Vec<usize> = (0..frame.n_samples())
        .map(|m| bank.bin_for_depth(frame.time_of(m) * c / 2.0))
        .collect();
    let mut out = RFFrame::zeros(
        frame.n_elements(),
        frame.n_samples(),
        frame.sample_rate,
        frame.t0 - bank.onset,
    );
    out.channels_mut()
        .zip(frame.channels())
        .collect::<Vec<_>>()
        .into_par_iter()
        .for_each(|(o, y)| correlate_channel(y, &bins, bank, o));
    Ok(MFOutput(out))
}

/// Sample-wise sum of the two correlator outputs of a Golay pair.
pub fn golay_combine(mf_a: &MFOutput, mf_b: &MFOutput) -> Result<MFOutput> {
    mf_a.0.add(&mf_b.0).map(MFOutput)
}
