//! Complementary Golay pairs and their BPSK chip-modulated transmit waveforms.
//!
//! Pairs are built from the length-2 kernel by the doubling rule
//! `A' = A ‖ B`, `B' = A ‖ −B`, except length 10 which has no power-of-two
//! ancestry and is embedded. Every pair handed out has been run through
//! [`complementary_autocorrelation`] first.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Code lengths [`golay_pair`] can produce.
pub const SUPPORTED_LENGTHS: [usize; 5] = [2, 4, 8, 10, 16];

const KERNEL_A: [i8; 2] = [1, 1];
const KERNEL_B: [i8; 2] = [1, -1];

const PAIR10_A: [i8; 10] = [1, 1, -1, 1, -1, 1, -1, -1, 1, 1];
const PAIR10_B: [i8; 10] = [1, 1, -1, 1, 1, 1, 1, 1, -1, -1];

/// A pair of bipolar sequences whose aperiodic autocorrelations sum to an impulse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GolayPair {
    seq_a: Vec<i8>,
    seq_b: Vec<i8>,
}

impl GolayPair {
    /// Wraps two sequences without checking complementarity. Lengths and
    /// symbol alphabet are still enforced.
    pub fn from_sequences(seq_a: Vec<i8>, seq_b: Vec<i8>) -> Result<Self> {
        if seq_a.len() != seq_b.len() {
            return Err(Error::LengthMismatch {
                a: seq_a.len(),
                b: seq_b.len(),
            });
        }
        if seq_a.is_empty() {
            return Err(Error::param("length_bits", "must be positive"));
        }
        if seq_a.iter().chain(&seq_b).any(|&s| s != 1 && s != -1) {
            return Err(Error::param("sequence", "symbols must be +1 or -1"));
        }
        Ok(Self { seq_a, seq_b })
    }

    pub fn seq_a(&self) -> &[i8] {
        &self.seq_a
    }

    pub fn seq_b(&self) -> &[i8] {
        &self.seq_b
    }

    pub fn length_bits(&self) -> usize {
        self.seq_a.len()
    }

    /// True when the summed autocorrelation is `2N·δ(lag)`.
    pub fn is_complementary(&self) -> bool {
        let n = self.length_bits() as i64;
        complementary_autocorrelation(self)
            .map(|acf| {
                acf.iter().enumerate().all(|(lag, &v)| {
                    if lag + 1 == self.length_bits() {
                        v == 2 * n
                    } else {
                        v == 0
                    }
                })
            })
            .unwrap_or(false)
    }

    fn doubled(&self) -> Self {
        let mut a = self.seq_a.clone();
        a.extend_from_slice(&self.seq_b);
        let mut b = self.seq_a.clone();
        b.extend(self.seq_b.iter().map(|s| -s));
        Self { seq_a: a, seq_b: b }
    }
}

/// Builds the Golay pair of the requested length.
pub fn golay_pair(length_bits: usize) -> Result<GolayPair> {
    let pair = match length_bits {
        10 => GolayPair {
            seq_a: PAIR10_A.to_vec(),
            seq_b: PAIR10_B.to_vec(),
        },
        n if n >= 2 && n.is_power_of_two() && SUPPORTED_LENGTHS.contains(&n) => {
            let mut pair = GolayPair {
                seq_a: KERNEL_A.to_vec(),
                seq_b: KERNEL_B.to_vec(),
            };
            while pair.length_bits() < n {
                pair = pair.doubled();
            }
            pair
        }
        n => return Err(Error::NoKnownPair(n)),
    };
    if !pair.is_complementary() {
        return Err(Error::NotComplementary(length_bits));
    }
    Ok(pair)
}

fn aperiodic_acf(seq: &[i8]) -> Vec<i64> {
    let n = seq.len();
    let mut out = vec![0i64; 2 * n - 1];
    for (idx, slot) in out.iter_mut().enumerate() {
        let lag = idx as isize - (n as isize - 1);
        let mut acc = 0i64;
        for k in 0..n as isize {
            let j = k + lag;
            if j >= 0 && (j as usize) < n {
                acc += i64::from(seq[k as usize]) * i64::from(seq[j as usize]);
            }
        }
        *slot = acc;
    }
    out
}

/// Sum of the aperiodic autocorrelations of both sequences, indexed from lag
/// `-(N-1)` to `N-1` (so lag 0 sits at index `N-1`).
pub fn complementary_autocorrelation(pair: &GolayPair) -> Result<Vec<i64>> {
    if pair.seq_a.len() != pair.seq_b.len() {
        return Err(Error::LengthMismatch {
            a: pair.seq_a.len(),
            b: pair.seq_b.len(),
        });
    }
    let a = aperiodic_acf(&pair.seq_a);
    let b = aperiodic_acf(&pair.seq_b);
    Ok(a.iter().zip(&b).map(|(x, y)| x + y).collect())
}

fn check_modulation(carrier_freq: f64, cycles_per_chip: u32, sample_rate: f64) -> Result<()> {
    if !(carrier_freq > 0.0) || !carrier_freq.is_finite() {
        return Err(Error::param("carrier_freq", "must be positive"));
    }
    if !(sample_rate > 0.0) || !sample_rate.is_finite() {
        return Err(Error::param("sample_rate", "must be positive"));
    }
    if cycles_per_chip == 0 {
        return Err(Error::param("cycles_per_chip", "must be positive"));
    }
    if sample_rate < 4.0 * carrier_freq {
        return Err(Error::param(
            "sample_rate",
            format!("{sample_rate} Hz is below 4x the carrier ({carrier_freq} Hz)"),
        ));
    }
    Ok(())
}

/// Samples per chip: `round(cycles · fs / fc)`.
pub fn chip_samples(carrier_freq: f64, cycles_per_chip: u32, sample_rate: f64) -> usize {
    (f64::from(cycles_per_chip) * sample_rate / carrier_freq).round() as usize
}

/// One `+1` chip. The carrier phase restarts at every chip boundary so a
/// sign flip negates exactly that chip's span.
pub fn chip_waveform(carrier_freq: f64, cycles_per_chip: u32, sample_rate: f64) -> Result<Vec<f64>> {
    check_modulation(carrier_freq, cycles_per_chip, sample_rate)?;
    let len = chip_samples(carrier_freq, cycles_per_chip, sample_rate);
    Ok((0..len)
        .map(|k| (2.0 * PI * carrier_freq * k as f64 / sample_rate).sin())
        .collect())
}

fn modulate(seq: &[i8], chip: &[f64]) -> Vec<f64> {
    seq.iter()
        .flat_map(|&s| chip.iter().map(move |&v| f64::from(s) * v))
        .collect()
}

/// A Golay pair together with both sampled transmit waveforms.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedExcitation {
    pub pair: GolayPair,
    pub carrier_freq: f64,
    pub cycles_per_chip: u32,
    pub sample_rate: f64,
    pub waveform_a: Vec<f64>,
    pub waveform_b: Vec<f64>,
}

impl CodedExcitation {
    pub fn chip_len(&self) -> usize {
        chip_samples(self.carrier_freq, self.cycles_per_chip, self.sample_rate)
    }
}

/// BPSK-modulates both sequences of `pair` onto `cycles_per_chip` carrier cycles per chip.
pub fn bpsk_modulate(
    pair: &GolayPair,
    carrier_freq: f64,
    cycles_per_chip: u32,
    sample_rate: f64,
) -> Result<CodedExcitation> {
    let chip = chip_waveform(carrier_freq, cycles_per_chip, sample_rate)?;
    Ok(CodedExcitation {
        pair: pair.clone(),
        carrier_freq,
        cycles_per_chip,
        sample_rate,
        waveform_a: modulate(pair.seq_a(), &chip),
        waveform_b: modulate(pair.seq_b(), &chip),
    })
}

/// What is fired per image: an uncoded pulse (one transmission) or a Golay
/// pair (two transmissions whose correlator outputs are summed).
#[derive(Debug, Clone, PartialEq)]
pub enum Excitation {
    Pulse {
        waveform: Vec<f64>,
        sample_rate: f64,
    },
    Golay(CodedExcitation),
}

impl Excitation {
    /// `code_bits == 1` gives the uncoded pulse of one chip length.
    pub fn new(code_bits: usize, carrier_freq: f64, cycles_per_chip: u32, sample_rate: f64) -> Result<Self> {
        if code_bits == 1 {
            Ok(Excitation::Pulse {
                waveform: chip_waveform(carrier_freq, cycles_per_chip, sample_rate)?,
                sample_rate,
            })
        } else {
            let pair = golay_pair(code_bits)?;
            Ok(Excitation::Golay(bpsk_modulate(
                &pair,
                carrier_freq,
                cycles_per_chip,
                sample_rate,
            )?))
        }
    }

    pub fn chips(&self) -> usize {
        match self {
            Excitation::Pulse { .. } => 1,
            Excitation::Golay(c) => c.pair.length_bits(),
        }
    }

    pub fn sample_rate(&self) -> f64 {
        match self {
            Excitation::Pulse { sample_rate, .. } => *sample_rate,
            Excitation::Golay(c) => c.sample_rate,
        }
    }

    /// Waveforms in firing order.
    pub fn waveforms(&self) -> Vec<&[f64]> {
        match self {
            Excitation::Pulse { waveform, .. } => vec![waveform.as_slice()],
            Excitation::Golay(c) => vec![c.waveform_a.as_slice(), c.waveform_b.as_slice()],
        }
    }

    pub fn transmissions(&self) -> usize {
        self.waveforms().len()
    }
}
