//! STFT/ISTFT and the mel feature stack.
//!
//! Analysis uses a periodic Hann window, reflection padding of half a window
//! at both edges, and zero-padding of each frame to the FFT length. The
//! inverse applies the same window for synthesis and normalizes pointwise by
//! the accumulated squared-window sum, which makes `istft(stft(x))`
//! reconstruct `x` to FFT round-off for any config whose hop divides the
//! window into two or more overlaps.

mod dump;
mod mel;

pub use dump::{dump_complex_matrix, dump_real_matrix, load_complex_matrix, load_real_matrix};
pub use mel::{
    dct_ii_orthonormal, log_mel, mel_cepstra, mel_filterbank, MelSpectrogram, POWER_FLOOR,
};

use ndarray::Array2;
use realfft::num_complex::Complex64;
use realfft::RealFftPlanner;
use thiserror::Error;

use crate::audio::Waveform;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("invalid stft config: {0}")]
    InvalidConfig(String),
    #[error("signal too short: {len} samples, need at least one {window}-sample window")]
    SignalTooShort { len: usize, window: usize },
    #[error("overlap-add normalization collapsed (constant-overlap-add violated)")]
    ColaViolation,
    #[error("{n_mels} mel bands do not fit {bins} spectrum bins")]
    TooManyMelBands { n_mels: usize, bins: usize },
    #[error("{n_coeffs} cepstral coefficients need more than {n_mels} mel bands (c0 excluded)")]
    TooManyCepstra { n_coeffs: usize, n_mels: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad dump file {path}: {reason}")]
    BadDump { path: String, reason: String },
}

/// Analysis settings: window and hop in milliseconds plus the FFT length the
/// windowed frame is zero-padded to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StftConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub fft_len: usize,
}

impl StftConfig {
    /// 50 ms window, 12.5 ms hop, 512-point FFT: the separation-stage
    /// setting (400-sample window at the 8 kHz pipeline rate).
    pub const SEPARATION: Self = Self { window_ms: 50.0, hop_ms: 12.5, fft_len: 512 };

    /// 20 ms window, 5 ms hop, 1024-point FFT: the feature-extraction
    /// setting used for log-mel and cepstra.
    pub const FEATURES: Self = Self { window_ms: 20.0, hop_ms: 5.0, fft_len: 1024 };

    pub fn window_len(&self, sample_rate_hz: u32) -> usize {
        (self.window_ms * f64::from(sample_rate_hz) / 1000.0).round() as usize
    }

    pub fn hop_len(&self, sample_rate_hz: u32) -> usize {
        (self.hop_ms * f64::from(sample_rate_hz) / 1000.0).round() as usize
    }

    pub fn n_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    /// Validate against a sample rate and return (window, hop) in samples.
    pub fn lengths(&self, sample_rate_hz: u32) -> Result<(usize, usize), SpectralError> {
        let win = self.window_len(sample_rate_hz);
        let hop = self.hop_len(sample_rate_hz);
        if win == 0 || hop == 0 {
            return Err(SpectralError::InvalidConfig(format!(
                "window {} ms / hop {} ms at {} Hz collapse to zero samples",
                self.window_ms, self.hop_ms, sample_rate_hz
            )));
        }
        if !self.fft_len.is_power_of_two() {
            return Err(SpectralError::InvalidConfig(format!(
                "fft_len {} is not a power of two",
                self.fft_len
            )));
        }
        if win > self.fft_len {
            return Err(SpectralError::InvalidConfig(format!(
                "window of {win} samples exceeds fft_len {}",
                self.fft_len
            )));
        }
        if !win.is_multiple_of(hop) || win / hop < 2 {
            return Err(SpectralError::InvalidConfig(format!(
                "hop ({hop}) must divide the window ({win}) into at least 2 overlaps"
            )));
        }
        Ok((win, hop))
    }
}

/// Complex STFT bins, shape (frames, fft_len/2 + 1), plus everything needed
/// to invert back to the original signal length.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub bins: Array2<Complex64>,
    pub config: StftConfig,
    pub sample_rate_hz: u32,
    pub signal_len: usize,
}

impl ComplexSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.bins.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.bins.ncols()
    }

    /// Power spectrum |X|^2 per (frame, bin).
    pub fn power(&self) -> Array2<f64> {
        self.bins.mapv(|c| c.norm_sqr())
    }
}

/// Periodic Hann window of length `n`.
pub(crate) fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Reflection index without edge duplication.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut k = i.rem_euclid(period);
    if k >= n as isize {
        k = period - k;
    }
    k as usize
}

fn frame_count(len: usize, hop: usize) -> usize {
    1 + len.div_ceil(hop)
}

/// Short-time Fourier transform with Hann analysis window and centered
/// reflection padding.
pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram, SpectralError> {
    let (win, hop) = cfg.lengths(w.sample_rate_hz())?;
    let len = w.len();
    if len < win {
        return Err(SpectralError::SignalTooShort { len, window: win });
    }
    let frames = frame_count(len, hop);
    let pad_left = win / 2;
    let window = hann_periodic(win);

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(cfg.fft_len);
    let mut buf = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();

    let x = w.samples();
    let mut bins = Array2::zeros((frames, cfg.n_bins()));
    for m in 0..frames {
        let start = m as isize * hop as isize - pad_left as isize;
        for i in 0..win {
            buf[i] = x[reflect(start + i as isize, len)] * window[i];
        }
        buf[win..].fill(0.0);
        fft.process_with_scratch(&mut buf, &mut spectrum, &mut scratch)
            .expect("fft lengths are planned consistently");
        for (k, &v) in spectrum.iter().enumerate() {
            bins[(m, k)] = v;
        }
    }
    Ok(ComplexSpectrogram {
        bins,
        config: *cfg,
        sample_rate_hz: w.sample_rate_hz(),
        signal_len: len,
    })
}

/// Inverse STFT: per-frame inverse FFT, synthesis windowing, overlap-add,
/// and pointwise normalization by the squared-window sum.
pub fn istft(s: &ComplexSpectrogram) -> Result<Waveform, SpectralError> {
    let cfg = &s.config;
    let (win, hop) = cfg.lengths(s.sample_rate_hz)?;
    let frames = s.n_frames();
    let len = s.signal_len;
    let pad_left = win / 2;
    let window = hann_periodic(win);

    let mut planner = RealFftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(cfg.fft_len);
    let mut spectrum = ifft.make_input_vec();
    let mut frame = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();

    let total = (frames.saturating_sub(1)) * hop + win;
    let mut acc = vec![0.0f64; total];
    let mut wsum = vec![0.0f64; total];
    let scale = 1.0 / cfg.fft_len as f64;
    for m in 0..frames {
        for k in 0..s.n_bins().min(spectrum.len()) {
            spectrum[k] = s.bins[(m, k)];
        }
        // a real signal has purely real DC and Nyquist bins
        spectrum[0].im = 0.0;
        let last = spectrum.len() - 1;
        spectrum[last].im = 0.0;
        ifft.process_with_scratch(&mut spectrum, &mut frame, &mut scratch)
            .expect("fft lengths are planned consistently");
        let base = m * hop;
        for i in 0..win {
            acc[base + i] += frame[i] * scale * window[i];
            wsum[base + i] += window[i] * window[i];
        }
    }

    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let p = pad_left + i;
        if p >= total || wsum[p] <= 1e-9 {
            return Err(SpectralError::ColaViolation);
        }
        out.push(acc[p] / wsum[p]);
    }
    Waveform::new(out, s.sample_rate_hz)
        .map_err(|_| SpectralError::InvalidConfig("non-finite reconstruction".into()))
}
