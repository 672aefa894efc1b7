//! Signal front-end and back-end.
//!
//! Framing is fixed at 32 ms frames with a 16 ms shift at 16 kHz, i.e. a
//! 512-point transform with a hop of 256 samples and 257 retained bins.
//! Analysis and synthesis both use a square-root Hann window, so the
//! window-square sum is constant across fully overlapped samples and the
//! inverse transform is an exact overlap-add.

mod features;
mod stft;
mod wav;

pub use features::{
    apply_mask, denormalize, fit_normalization, linear_magnitude, log_magnitude, log_of_magnitude,
    normalize,
    resynthesize, smm_target, FeatureKind, FeatureMatrix, Mask, NormalizationStats,
};
pub use stft::{istft, stft, Spectrogram, Stft, Window};
pub use wav::{read_wav, write_wav};

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const FRAME_LEN: usize = 512;
pub const HOP: usize = 256;
pub const NUM_BINS: usize = FRAME_LEN / 2 + 1;

/// Floor added to magnitudes before the logarithm.
pub const LOG_FLOOR: f64 = 1e-7;
/// Floor added to the mixture magnitude in mask targets.
pub const DIV_FLOOR: f64 = 1e-8;
/// Lower bound on per-bin standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// A mono 16 kHz signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
}

impl Waveform {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("waveform sample {i}")));
        }
        Ok(Self { samples })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            samples: vec![0.0; len],
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
        }
    }
}
