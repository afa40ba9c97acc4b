//! End-to-end imaging chain: simulate transmit events, correlate, beamform.

use rayon::prelude::*;

use crate::acoustics::{
    add_noise, element_impulse_response, noise_frame, Acquisition, ChannelSpectra, ElementResponse, Medium, Phantom,
    RFFrame,
};
use crate::beamform::{self, das_csf, das_dw, das_sta, das_sta_events, GaussianBand, PolarGrid, Scanlines, Scheme};
use crate::codes::Excitation;
use crate::error::{Error, Result};
use crate::receiver::{build_reference_bank, extract_reference, golay_combine, matched_filter, MFOutput, ReferenceBank};
use crate::txprofiles::{csf_scan_plan, dw_delays, focused_delays, single_element, ArrayGeometry, BeamSpec, DelayProfile};

/// Hardware and medium parameters shared by every scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub geometry: ArrayGeometry,
    pub medium: Medium,
    pub center_freq: f64,
    pub fractional_bw: f64,
    pub sample_rate: f64,
    pub cycles_per_chip: u32,
    pub fixed_gain_db: f64,
    pub tgc_db_per_cm: f64,
}

impl Default for System {
    fn default() -> Self {
        Self {
            geometry: ArrayGeometry::default(),
            medium: Medium::default(),
            center_freq: 7.5e6,
            fractional_bw: 0.70,
            sample_rate: 80e6,
            cycles_per_chip: 2,
            fixed_gain_db: 22.0,
            tgc_db_per_cm: 2.3,
        }
    }
}

impl System {
    pub fn response(&self) -> Result<ElementResponse> {
        element_impulse_response(self.center_freq, self.fractional_bw, self.sample_rate)
    }

    pub fn excitation(&self, code_bits: usize) -> Result<Excitation> {
        Excitation::new(code_bits, self.center_freq, self.cycles_per_chip, self.sample_rate)
    }

    pub fn band(&self) -> GaussianBand {
        GaussianBand {
            center_freq: self.center_freq,
            fractional_bw: self.fractional_bw,
        }
    }
}

/// Transmit scheme with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemeParams {
    Dw { r_v: f64 },
    Sta,
    Csf { plan: Vec<BeamSpec> },
}

impl SchemeParams {
    pub fn csf_default() -> Self {
        SchemeParams::Csf { plan: csf_scan_plan() }
    }

    pub fn scheme(&self) -> Scheme {
        match self {
            SchemeParams::Dw { .. } => Scheme::Dw,
            SchemeParams::Sta => Scheme::Sta,
            SchemeParams::Csf { .. } => Scheme::Csf,
        }
    }

    /// One delay profile per transmit event.
    pub fn tx_profiles(&self, geometry: &ArrayGeometry, c: f64) -> Result<Vec<DelayProfile>> {
        match self {
            SchemeParams::Dw { r_v } => Ok(vec![dw_delays(*r_v, geometry, c)?]),
            SchemeParams::Sta => (0..geometry.n_elements()).map(|j| single_element(j, geometry)).collect(),
            SchemeParams::Csf { plan } => plan
                .iter()
                .map(|b| focused_delays(b.focus_range, b.steer_deg, geometry, c))
                .collect(),
        }
    }
}

/// Per-frame noise seed.
pub fn frame_seed(seed: u64, frame: usize) -> u64 {
    seed ^ (frame as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Everything needed to turn a phantom into beamformed scan lines.
#[derive(Debug, Clone)]
pub struct Imager {
    pub system: System,
    pub excitation: Excitation,
    pub acquisition: Acquisition,
    /// One bank per transmitted waveform.
    banks: Vec<ReferenceBank>,
}

impl Imager {
    /// Records long enough for echoes from `max_depth`.
    pub fn new(system: System, code_bits: usize, max_depth: f64) -> Result<Self> {
        if !(max_depth > 0.0) {
            return Err(Error::param("max_depth", "must be positive"));
        }
        let response = system.response()?;
        let excitation = system.excitation(code_bits)?;
        let longest = excitation.waveforms().iter().map(|w| w.len()).max().unwrap_or(0);
        let tail = (longest + 2 * response.impulse.len()) as f64 / system.sample_rate;
        let refs = extract_reference(&excitation, &system.geometry, &response, &system.medium)?;
        let banks = refs
            .iter()
            .map(|r| build_reference_bank(r, &system.medium))
            .collect::<Result<Vec<_>>>()?;
        let acquisition = Acquisition::for_depth(
            system.geometry.clone(),
            response,
            max_depth,
            system.medium.sound_speed,
            tail,
        );
        Ok(Self {
            system,
            excitation,
            acquisition,
            banks,
        })
    }

    /// Correlate against the water reference at every depth.
    pub fn without_compensation(mut self) -> Self {
        self.banks = self.banks.iter().map(|b| b.uncompensated()).collect();
        self
    }

    pub fn banks(&self) -> &[ReferenceBank] {
        &self.banks
    }

    pub fn c(&self) -> f64 {
        self.system.medium.sound_speed
    }

    /// RF frames in firing order: per transmit event, every waveform of the excitation.
    pub fn simulate(&self, scheme: &SchemeParams, phantom: &Phantom, noise_power: f64, seed: u64) -> Result<Vec<RFFrame>> {
        let profiles = scheme.tx_profiles(&self.system.geometry, self.c())?;
        let waves = self.excitation.waveforms();
        let per_event = waves.len();
        let events = profiles
            .par_iter()
            .enumerate()
            .map(|(e, p)| {
                let spectra = ChannelSpectra::compute(p, phantom, &self.acquisition)?;
                waves
                    .iter()
                    .enumerate()
                    .map(|(s, w)| {
                        let mut f = spectra.render(w);
                        add_noise(&mut f, noise_power, frame_seed(seed, e * per_event + s))?;
                        Ok(f)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(events.into_iter().flatten().collect())
    }

    /// Noise-only frames with the same count and seeds as [`Imager::simulate`].
    pub fn noise_frames(&self, scheme: &SchemeParams, noise_power: f64, seed: u64) -> Result<Vec<RFFrame>> {
        let n = self.frame_count(scheme);
        (0..n)
            .into_par_iter()
            .map(|k| noise_frame(&self.acquisition, noise_power, frame_seed(seed, k)))
            .collect()
    }

    pub fn frame_count(&self, scheme: &SchemeParams) -> usize {
        let events = match scheme {
            SchemeParams::Dw { .. } => 1,
            SchemeParams::Sta => self.system.geometry.n_elements(),
            SchemeParams::Csf { plan } => plan.len(),
        };
        events * self.excitation.transmissions()
    }

    /// Gain, correlation and Golay combination: one output per transmit event.
    pub fn correlate(&self, frames: &[RFFrame]) -> Result<Vec<MFOutput>> {
        let per = self.banks.len();
        if frames.is_empty() || !frames.len().is_multiple_of(per) {
            return Err(Error::ShapeMismatch(format!(
                "{} frames for {per} transmissions per event",
                frames.len()
            )));
        }
        let c = self.c();
        frames
            .par_chunks(per)
            .map(|ev| {
                let mut acc: Option<MFOutput> = None;
                for (f, bank) in ev.iter().zip(&self.banks) {
                    let g = beamform::apply_gain(f, self.system.fixed_gain_db, self.system.tgc_db_per_cm, c);
                    let mf = matched_filter(&g, bank, c)?;
                    acc = Some(match acc {
                        None => mf,
                        Some(a) => golay_combine(&a, &mf)?,
                    });
                }
                acc.ok_or_else(|| Error::Degenerate("empty event".into()))
            })
            .collect()
    }

    fn pulsed_csf(&self, scheme: &SchemeParams) -> bool {
        matches!(scheme, SchemeParams::Csf { .. }) && matches!(self.excitation, Excitation::Pulse { .. })
    }

    /// Receive data of one event: correlator output, or gained RF for pulsed
    /// CSF (which is band-pass filtered instead).
    fn prepare_event(&self, scheme: &SchemeParams, frames: &[RFFrame]) -> Result<RFFrame> {
        if self.pulsed_csf(scheme) {
            let f = frames.first().ok_or_else(|| Error::Degenerate("empty event".into()))?;
            let c = self.c();
            return Ok(beamform::apply_gain(f, self.system.fixed_gain_db, self.system.tgc_db_per_cm, c));
        }
        let mut mf = self.correlate(frames)?;
        if mf.len() != 1 {
            return Err(Error::ShapeMismatch(format!("{} frames for one event", frames.len())));
        }
        Ok(mf.remove(0).into_frame())
    }

    /// Whether [`Imager::prepare`] runs the correlator for `scheme`.
    pub fn uses_correlator(&self, scheme: &SchemeParams) -> bool {
        !self.pulsed_csf(scheme)
    }

    /// Per-event receive data ready for beamforming.
    pub fn prepare(&self, scheme: &SchemeParams, frames: &[RFFrame]) -> Result<Vec<RFFrame>> {
        let expected = self.frame_count(scheme);
        if frames.len() != expected {
            return Err(Error::ShapeMismatch(format!("{} frames, scheme needs {expected}", frames.len())));
        }
        frames
            .par_chunks(self.excitation.transmissions())
            .map(|ev| self.prepare_event(scheme, ev))
            .collect()
    }

    /// Beamforms the output of [`Imager::prepare`]. CSF lines are sampled at
    /// the plan's angles and `grid`'s ranges.
    pub fn beamform_prepared(&self, scheme: &SchemeParams, events: &[RFFrame], grid: &PolarGrid) -> Result<Scanlines> {
        let geom = &self.system.geometry;
        let c = self.c();
        let mf = || events.iter().cloned().map(MFOutput::from_frame).collect::<Vec<_>>();
        match scheme {
            SchemeParams::Dw { r_v } => {
                let ev = events.first().ok_or_else(|| Error::Degenerate("no events".into()))?;
                das_dw(&MFOutput::from_frame(ev.clone()), *r_v, grid, geom, c)
            }
            SchemeParams::Sta => das_sta(&mf(), grid, geom, c),
            SchemeParams::Csf { plan } => das_csf(events, plan, grid.ranges(), geom, c, self.system.band()),
        }
    }

    /// Beamformed RF scan lines straight from simulated frames.
    pub fn beamform(&self, scheme: &SchemeParams, frames: &[RFFrame], grid: &PolarGrid) -> Result<Scanlines> {
        self.beamform_prepared(scheme, &self.prepare(scheme, frames)?, grid)
    }

    /// Simulated, correlated, beamformed and envelope-detected image.
    pub fn envelope_image(
        &self,
        scheme: &SchemeParams,
        phantom: &Phantom,
        noise_power: f64,
        seed: u64,
        grid: &PolarGrid,
    ) -> Result<Scanlines> {
        let frames = self.simulate(scheme, phantom, noise_power, seed)?;
        Ok(beamform::envelope(&self.beamform(scheme, &frames, grid)?))
    }

    /// Noise-free frames of transmit event `event`, one per waveform.
    fn event_frames(&self, profile: &DelayProfile, phantom: Option<&Phantom>) -> Result<Vec<RFFrame>> {
        let acq = &self.acquisition;
        match phantom {
            Some(ph) => {
                let spectra = ChannelSpectra::compute(profile, ph, acq)?;
                Ok(self.excitation.waveforms().iter().map(|w| spectra.render(w)).collect())
            }
            None => Ok(vec![
                RFFrame::zeros(acq.geometry.n_elements(), acq.n_samples, acq.sample_rate, acq.t0);
                self.excitation.transmissions()
            ]),
        }
    }

    /// Simulates noisy frames event by event, handing each event's frames to `sink`.
    pub fn simulate_each(
        &self,
        scheme: &SchemeParams,
        phantom: &Phantom,
        noise_power: f64,
        seed: u64,
        mut sink: impl FnMut(usize, Vec<RFFrame>) -> Result<()>,
    ) -> Result<()> {
        let per = self.excitation.transmissions();
        for (e, profile) in scheme.tx_profiles(&self.system.geometry, self.c())?.iter().enumerate() {
            let mut frames = self.event_frames(profile, Some(phantom))?;
            for (s, f) in frames.iter_mut().enumerate() {
                add_noise(f, noise_power, frame_seed(seed, e * per + s))?;
            }
            sink(e, frames)?;
        }
        Ok(())
    }

    /// One event's share of the image: a full image for DW and STA, one line for CSF.
    fn event_lines(&self, scheme: &SchemeParams, event: usize, data: RFFrame, grid: &PolarGrid) -> Result<Scanlines> {
        let geom = &self.system.geometry;
        let c = self.c();
        match scheme {
            SchemeParams::Dw { r_v } => das_dw(&MFOutput::from_frame(data), *r_v, grid, geom, c),
            SchemeParams::Sta => das_sta_events(&[(event, &MFOutput::from_frame(data))], grid, geom, c),
            SchemeParams::Csf { plan } => das_csf(&[data], &plan[event..=event], grid.ranges(), geom, c, self.system.band()),
        }
    }

    /// Simulates, prepares and beamforms one transmit event at a time, so
    /// memory holds a single event. `sink` receives each event's noisy
    /// frames and prepared data in firing order. With `phantom = None` the
    /// frames hold noise only. When `keep_clean` is set the noise-free image
    /// is formed alongside.
    #[allow(clippy::too_many_arguments)]
    pub fn stream(
        &self,
        scheme: &SchemeParams,
        phantom: Option<&Phantom>,
        noise_power: f64,
        seed: u64,
        grid: &PolarGrid,
        keep_clean: bool,
        mut sink: impl FnMut(usize, &[RFFrame], &RFFrame) -> Result<()>,
    ) -> Result<Streamed> {
        let profiles = scheme.tx_profiles(&self.system.geometry, self.c())?;
        let per = self.excitation.transmissions();
        let out_grid = match scheme {
            SchemeParams::Csf { plan } => PolarGrid::new(plan.iter().map(|b| b.steer_deg).collect(), grid.ranges().to_vec())?,
            _ => grid.clone(),
        };
        let nr = out_grid.n_ranges();
        let mut acc = vec![0.0; out_grid.len()];
        let mut acc_clean = keep_clean.then(|| vec![0.0; out_grid.len()]);
        let merge = |dst: &mut Vec<f64>, e: usize, part: &Scanlines| match scheme {
            SchemeParams::Csf { .. } => dst[e * nr..(e + 1) * nr].copy_from_slice(part.line(0)),
            _ => dst.iter_mut().zip(part.data()).for_each(|(a, b)| *a += b),
        };
        for (e, profile) in profiles.iter().enumerate() {
            let clean = self.event_frames(profile, phantom)?;
            let mut noisy = clean.clone();
            for (s, f) in noisy.iter_mut().enumerate() {
                add_noise(f, noise_power, frame_seed(seed, e * per + s))?;
            }
            let data = self.prepare_event(scheme, &noisy)?;
            sink(e, &noisy, &data)?;
            let part = self.event_lines(scheme, e, data, grid)?;
            merge(&mut acc, e, &part);
            if let Some(ac) = acc_clean.as_mut() {
                let part = self.event_lines(scheme, e, self.prepare_event(scheme, &clean)?, grid)?;
                merge(ac, e, &part);
            }
        }
        Ok(Streamed {
            lines: Scanlines::from_data(out_grid.clone(), acc)?,
            clean_lines: acc_clean.map(|a| Scanlines::from_data(out_grid, a)).transpose()?,
        })
    }
}

/// Beamformed RF lines from [`Imager::stream`].
#[derive(Debug, Clone, PartialEq)]
pub struct Streamed {
    pub lines: Scanlines,
    pub clean_lines: Option<Scanlines>,
}
