//! Waveform representation, lossless WAV I/O, mu-law companding, resampling.
//!
//! A [`Waveform`] is a mono time-domain signal with an explicit sample rate.
//! Pipeline stages exchange waveforms; files on disk are 16-bit PCM RIFF/WAVE
//! so round trips are bit-exact and testable without codec dependencies.

mod mulaw;
mod resample;
mod wav;

pub use mulaw::{mulaw_decode, mulaw_encode, mulaw_max_cell_error, MuLawCode};
pub use resample::resample;
pub use wav::{read_wav, write_wav};

use thiserror::Error;

/// Canonical pipeline sample rate. Inputs at other rates are resampled at
/// ingestion by the CLI with a warning.
pub const CANONICAL_RATE_HZ: u32 = 8000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("multichannel unsupported: file has {0} channels")]
    Multichannel(u16),
    #[error("sample out of range: |{0}| > 1")]
    SampleOutOfRange(f64),
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("empty signal")]
    Empty,
    #[error("invalid sample rate: {0}")]
    InvalidRate(u32),
}

/// Mono time-domain signal. Samples are real amplitudes, nominally in
/// [-1, 1]; superimposition may transiently exceed that range, which is
/// resolved by clamping at WAV write time.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    /// Wrap samples at a given rate, rejecting non-finite values and a zero
    /// sample rate.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        if sample_rate_hz == 0 {
            return Err(AudioError::InvalidRate(sample_rate_hz));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    /// All-zero signal of `len` samples.
    pub fn silence(len: usize, sample_rate_hz: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate_hz }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    /// Mean squared amplitude over the full clip.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }

    /// Largest absolute amplitude.
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }
}
