//! Coded diverging-wave ultrasound imaging.
//!
//! The crate simulates pulse-echo acquisitions of point-scatterer phantoms
//! with a linear array, compresses Golay-coded echoes with a depth-indexed,
//! attenuation-compensated correlation receiver, forms sector images with
//! diverging-wave (DW), synthetic transmit aperture (STA) and conventional
//! single-focus (CSF) delay-and-sum beamformers, and measures the images
//! (SNR₊₁, CNR, pin signal strength, penetration depth). The `optimize`
//! module sweeps the DW virtual source distance against an STA reference.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acoustics;
pub mod beamform;
pub mod codes;
pub mod config;
pub mod dsp;
pub mod error;
pub mod io;
pub mod metrics;
pub mod optimize;
pub mod pipeline;
pub mod receiver;
pub mod run;
pub mod txprofiles;

pub use error::{Error, Result};
