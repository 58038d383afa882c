//! Denoiser interface, residual background extraction, and superimposition.
//!
//! A denoiser maps a noisy waveform to a speech estimate of the same length;
//! the background is always the exact per-sample residual `b = x_n - x_e`,
//! so `speech_estimate + background` reconstructs the input to the last ulp
//! regardless of how good the denoiser is. After conversion the background
//! can be added back or dropped.

use thiserror::Error;

use crate::audio::{resample, AudioError, Waveform};
use crate::spectral::{istft, stft, SpectralError, StftConfig};

#[derive(Debug, Error)]
pub enum SeparationError {
    #[error("denoiser output length {got} differs from input length {expected}")]
    OutputLengthMismatch { expected: usize, got: usize },
    #[error("denoiser output rate {got} Hz differs from input rate {expected} Hz")]
    OutputRateMismatch { expected: u32, got: u32 },
    #[error("oracle reference misaligned: clean {clean} vs noisy {noisy} samples")]
    MisalignedReference { clean: usize, noisy: usize },
    #[error("noise profile of {profile_ms} ms does not fit a {clip_ms:.1} ms clip")]
    NoiseProfileTooLong { profile_ms: f64, clip_ms: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

/// A speech/background separation front end. Implementations must be
/// deterministic given their configuration and must preserve length and rate.
pub trait Denoiser: Send + Sync {
    fn name(&self) -> &str;
    fn denoise(&self, noisy: &Waveform) -> Result<Waveform, SeparationError>;
}

/// The separated triple. `background` is stored exactly as the floating
/// point residual `noisy - speech_estimate`.
#[derive(Debug, Clone)]
pub struct SeparationResult {
    pub noisy: Waveform,
    pub speech_estimate: Waveform,
    pub background: Waveform,
}

/// Run a denoiser and extract the residual background.
pub fn separate(d: &dyn Denoiser, noisy: &Waveform) -> Result<SeparationResult, SeparationError> {
    let speech_estimate = d.denoise(noisy)?;
    if speech_estimate.len() != noisy.len() {
        return Err(SeparationError::OutputLengthMismatch {
            expected: noisy.len(),
            got: speech_estimate.len(),
        });
    }
    if speech_estimate.sample_rate_hz() != noisy.sample_rate_hz() {
        return Err(SeparationError::OutputRateMismatch {
            expected: noisy.sample_rate_hz(),
            got: speech_estimate.sample_rate_hz(),
        });
    }
    let background = Waveform::new(
        noisy
            .samples()
            .iter()
            .zip(speech_estimate.samples())
            .map(|(n, e)| n - e)
            .collect(),
        noisy.sample_rate_hz(),
    )?;
    Ok(SeparationResult { noisy: noisy.clone(), speech_estimate, background })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuperimposeMode {
    Add,
    Drop,
}

impl SuperimposeMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "add" => Some(Self::Add),
            "drop" => Some(Self::Drop),
            _ => None,
        }
    }
}

/// Add the separated background back onto converted speech (or drop it).
/// Converters may change length or rate slightly; the converted signal is
/// resampled, then truncated or zero-padded to the background, each with a
/// logged warning.
pub fn superimpose(
    converted: &Waveform,
    background: &Waveform,
    mode: SuperimposeMode,
) -> Result<Waveform, SeparationError> {
    if mode == SuperimposeMode::Drop {
        return Ok(converted.clone());
    }
    let mut conv = converted.clone();
    if conv.sample_rate_hz() != background.sample_rate_hz() {
        eprintln!(
            "warning: superimpose resampling converted speech {} Hz -> {} Hz",
            conv.sample_rate_hz(),
            background.sample_rate_hz()
        );
        conv = resample(&conv, background.sample_rate_hz())?;
    }
    let mut samples = conv.into_samples();
    if samples.len() != background.len() {
        eprintln!(
            "warning: superimpose adjusting converted length {} -> {}",
            samples.len(),
            background.len()
        );
        samples.resize(background.len(), 0.0);
    }
    for (s, b) in samples.iter_mut().zip(background.samples()) {
        *s += b;
    }
    Ok(Waveform::new(samples, background.sample_rate_hz())?)
}

/// Passes the input through unchanged; the background comes out as silence.
pub struct IdentityDenoiser;

impl Denoiser for IdentityDenoiser {
    fn name(&self) -> &str {
        "identity"
    }

    fn denoise(&self, noisy: &Waveform) -> Result<Waveform, SeparationError> {
        Ok(noisy.clone())
    }
}

/// Estimates silence; the whole input becomes background.
pub struct ZeroDenoiser;

impl Denoiser for ZeroDenoiser {
    fn name(&self) -> &str {
        "zero"
    }

    fn denoise(&self, noisy: &Waveform) -> Result<Waveform, SeparationError> {
        Ok(Waveform::silence(noisy.len(), noisy.sample_rate_hz()))
    }
}

/// Magnitude spectral subtraction with the noise spectrum estimated from the
/// leading profile region. Phase is reused from the input.
pub struct SpecSubDenoiser {
    pub config: StftConfig,
    pub noise_profile_ms: f64,
    pub oversubtraction: f64,
    pub spectral_floor: f64,
}

impl SpecSubDenoiser {
    pub fn new(
        config: StftConfig,
        noise_profile_ms: f64,
        oversubtraction: f64,
        spectral_floor: f64,
    ) -> Self {
        Self { config, noise_profile_ms, oversubtraction, spectral_floor }
    }
}

impl Default for SpecSubDenoiser {
    fn default() -> Self {
        Self::new(StftConfig::SEPARATION, 200.0, 1.0, 0.02)
    }
}

impl Denoiser for SpecSubDenoiser {
    fn name(&self) -> &str {
        "specsub"
    }

    fn denoise(&self, noisy: &Waveform) -> Result<Waveform, SeparationError> {
        let clip_ms = noisy.duration_s() * 1000.0;
        if self.noise_profile_ms >= clip_ms {
            return Err(SeparationError::NoiseProfileTooLong {
                profile_ms: self.noise_profile_ms,
                clip_ms,
            });
        }
        let mut spec = stft(noisy, &self.config)?;
        let hop = self.config.hop_len(noisy.sample_rate_hz());
        let profile_samples =
            (self.noise_profile_ms * f64::from(noisy.sample_rate_hz()) / 1000.0) as usize;
        let n_profile = (profile_samples / hop).clamp(1, spec.n_frames());

        // RMS magnitude per bin over the profile frames
        let n_bins = spec.n_bins();
        let mut noise_mag = vec![0.0f64; n_bins];
        for m in 0..n_profile {
            for (acc, v) in noise_mag.iter_mut().zip(spec.bins.row(m)) {
                *acc += v.norm_sqr();
            }
        }
        for acc in noise_mag.iter_mut() {
            *acc = (*acc / n_profile as f64).sqrt();
        }

        for mut row in spec.bins.rows_mut() {
            for (v, floor_mag) in row.iter_mut().zip(&noise_mag) {
                let mag = v.norm();
                if mag <= 0.0 {
                    continue;
                }
                let sub =
                    (mag - self.oversubtraction * floor_mag).max(self.spectral_floor * mag);
                *v *= sub / mag;
            }
        }
        Ok(istft(&spec)?)
    }
}

/// Oracle denoiser applying the ideal ratio mask `|S|^2 / (|S|^2 + |N|^2)`
/// per time-frequency bin, computed from the aligned clean reference. Gives
/// an upper-bound separation quality without any training.
pub struct IrmOracleDenoiser {
    pub clean: Waveform,
    pub config: StftConfig,
}

impl IrmOracleDenoiser {
    pub fn new(clean: Waveform, config: StftConfig) -> Self {
        Self { clean, config }
    }
}

impl Denoiser for IrmOracleDenoiser {
    fn name(&self) -> &str {
        "irm"
    }

    fn denoise(&self, noisy: &Waveform) -> Result<Waveform, SeparationError> {
        if self.clean.len() != noisy.len()
            || self.clean.sample_rate_hz() != noisy.sample_rate_hz()
        {
            return Err(SeparationError::MisalignedReference {
                clean: self.clean.len(),
                noisy: noisy.len(),
            });
        }
        let clean_spec = stft(&self.clean, &self.config)?;
        let mut spec = stft(noisy, &self.config)?;
        for m in 0..spec.n_frames() {
            for k in 0..spec.n_bins() {
                let s2 = clean_spec.bins[(m, k)].norm_sqr();
                let n2 = (spec.bins[(m, k)] - clean_spec.bins[(m, k)]).norm_sqr();
                let denom = s2 + n2;
                let mask = if denom > 0.0 { s2 / denom } else { 0.0 };
                spec.bins[(m, k)] *= mask;
            }
        }
        Ok(istft(&spec)?)
    }
}
