//! Mel filterbank, log-mel features, and mel cepstra.

use ndarray::Array2;

use super::{stft, SpectralError, StftConfig};
use crate::audio::Waveform;

/// Power floor applied before the natural log so digital silence maps to a
/// finite value instead of -inf.
pub const POWER_FLOOR: f64 = 1e-10;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank from 0 Hz to Nyquist, shape (n_mels, bins),
/// with slaney-style area normalization (each triangle scaled to unit area
/// in Hz) so spectrally flat inputs produce flat band energies.
pub fn mel_filterbank(
    sample_rate_hz: u32,
    fft_len: usize,
    n_mels: usize,
) -> Result<Array2<f64>, SpectralError> {
    let bins = fft_len / 2 + 1;
    if n_mels == 0 || n_mels + 2 > bins {
        return Err(SpectralError::TooManyMelBands { n_mels, bins });
    }
    let nyquist = f64::from(sample_rate_hz) / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = f64::from(sample_rate_hz) / fft_len as f64;

    let mut fb = Array2::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = if f <= lo || f >= hi {
                0.0
            } else if f <= center {
                (f - lo) / (center - lo)
            } else {
                (hi - f) / (hi - center)
            };
            fb[(m, k)] = w * norm;
        }
    }
    Ok(fb)
}

/// Log mel-spectrogram: matrix of natural-log band energies, shape
/// (frames, n_mels), floored at [`POWER_FLOOR`] before the log.
#[derive(Debug, Clone)]
pub struct MelSpectrogram {
    pub frames: Array2<f64>,
    pub n_mels: usize,
    pub power_floor: f64,
    pub sample_rate_hz: u32,
    pub config: StftConfig,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    /// Lower bound of every entry: ln of the power floor.
    pub fn floor_log(&self) -> f64 {
        self.power_floor.ln()
    }
}

/// Power spectrum -> mel filterbank -> natural log with floor.
pub fn log_mel(
    w: &Waveform,
    cfg: &StftConfig,
    n_mels: usize,
) -> Result<MelSpectrogram, SpectralError> {
    let spec = stft(w, cfg)?;
    let fb = mel_filterbank(w.sample_rate_hz(), cfg.fft_len, n_mels)?;
    let power = spec.power();
    let energies = power.dot(&fb.t());
    let frames = energies.mapv(|e| e.max(POWER_FLOOR).ln());
    Ok(MelSpectrogram {
        frames,
        n_mels,
        power_floor: POWER_FLOOR,
        sample_rate_hz: w.sample_rate_hz(),
        config: *cfg,
    })
}

/// Orthonormal DCT-II matrix of size (n, n): `T · Tᵀ = I`.
pub fn dct_ii_orthonormal(n: usize) -> Array2<f64> {
    let mut t = Array2::zeros((n, n));
    let scale0 = (1.0 / n as f64).sqrt();
    let scale = (2.0 / n as f64).sqrt();
    for k in 0..n {
        for j in 0..n {
            let angle = std::f64::consts::PI * k as f64 * (2.0 * j as f64 + 1.0) / (2.0 * n as f64);
            t[(k, j)] = if k == 0 { scale0 } else { scale * angle.cos() };
        }
    }
    t
}

/// Mel cepstra: orthonormal DCT-II over the mel axis, keeping coefficients
/// 1..=n_coeffs (the energy-like c0 is excluded). Shape (frames, n_coeffs).
pub fn mel_cepstra(m: &MelSpectrogram, n_coeffs: usize) -> Result<Array2<f64>, SpectralError> {
    if n_coeffs == 0 || n_coeffs >= m.n_mels {
        return Err(SpectralError::TooManyCepstra { n_coeffs, n_mels: m.n_mels });
    }
    let dct = dct_ii_orthonormal(m.n_mels);
    let full = m.frames.dot(&dct.t()); // (frames, n_mels)
    Ok(full.slice(ndarray::s![.., 1..=n_coeffs]).to_owned())
}
