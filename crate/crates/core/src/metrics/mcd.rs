//! Mel-cepstral distortion with DTW alignment and a reference energy gate.

use ndarray::Array2;

use super::MetricError;
use crate::audio::Waveform;
use crate::spectral::{dct_ii_orthonormal, mel_filterbank, stft, StftConfig};

/// Conversion from mean natural-log cepstral distance to dB:
/// `(10 / ln 10) * sqrt(2)`.
pub const MCD_SCALE: f64 = 6.141851463713754;

/// Mel bands feeding the cepstra.
const N_MELS: usize = 80;
/// Reference frames more than this far below the loudest frame are dropped.
const GATE_DB: f64 = 40.0;

/// Full MCD output: the score, the DTW alignment, and the cepstra it was
/// computed from (reference rows are the gated subset).
#[derive(Debug, Clone)]
pub struct McdResult {
    pub value_db: f64,
    /// Monotone, boundary-complete alignment between kept reference frames
    /// and estimate frames.
    pub path: Vec<(usize, usize)>,
    /// Original frame index of each kept reference row.
    pub kept_ref_frames: Vec<usize>,
    pub ref_cepstra: Array2<f64>,
    pub est_cepstra: Array2<f64>,
}

/// Cepstra (c1..=n_coeffs) per frame, plus per-frame spectral energies.
fn cepstra_and_energy(
    w: &Waveform,
    cfg: &StftConfig,
    n_coeffs: usize,
) -> Result<(Array2<f64>, Vec<f64>), MetricError> {
    let spec = stft(w, cfg)?;
    let power = spec.power();
    let energies: Vec<f64> = power.rows().into_iter().map(|r| r.sum()).collect();
    let fb = mel_filterbank(w.sample_rate_hz(), cfg.fft_len, N_MELS)?;
    let mel = power.dot(&fb.t()).mapv(|e| e.max(crate::spectral::POWER_FLOOR).ln());
    let dct = dct_ii_orthonormal(N_MELS);
    let full = mel.dot(&dct.t());
    Ok((full.slice(ndarray::s![.., 1..=n_coeffs]).to_owned(), energies))
}

/// Dynamic time warp with unit steps and Euclidean frame cost. Returns the
/// total path cost and the path itself.
fn dtw(a: &Array2<f64>, b: &Array2<f64>) -> (f64, Vec<(usize, usize)>) {
    let n = a.nrows();
    let m = b.nrows();
    let cost = |i: usize, j: usize| -> f64 {
        a.row(i)
            .iter()
            .zip(b.row(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    };

    let mut acc = Array2::from_elem((n, m), f64::INFINITY);
    // steps: 0 = diagonal, 1 = up (i-1), 2 = left (j-1)
    let mut step = Array2::from_elem((n, m), 0u8);
    acc[(0, 0)] = cost(0, 0);
    for i in 0..n {
        for j in 0..m {
            if i == 0 && j == 0 {
                continue;
            }
            let c = cost(i, j);
            let mut best = f64::INFINITY;
            let mut s = 0u8;
            if i > 0 && j > 0 && acc[(i - 1, j - 1)] < best {
                best = acc[(i - 1, j - 1)];
                s = 0;
            }
            if i > 0 && acc[(i - 1, j)] < best {
                best = acc[(i - 1, j)];
                s = 1;
            }
            if j > 0 && acc[(i, j - 1)] < best {
                best = acc[(i, j - 1)];
                s = 2;
            }
            acc[(i, j)] = best + c;
            step[(i, j)] = s;
        }
    }

    let mut path = Vec::new();
    let (mut i, mut j) = (n - 1, m - 1);
    loop {
        path.push((i, j));
        if i == 0 && j == 0 {
            break;
        }
        match step[(i, j)] {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
    }
    path.reverse();
    (acc[(n - 1, m - 1)], path)
}

/// Mel-cepstral distortion in dB between a reference and an estimate:
/// DTW-aligned mean Euclidean distance over cepstra c1..=n_coeffs, scaled by
/// [`MCD_SCALE`]. Reference frames whose spectral energy sits more than
/// 40 dB below the loudest reference frame are excluded before alignment.
pub fn mcd_detailed(
    reference: &Waveform,
    estimate: &Waveform,
    n_coeffs: usize,
) -> Result<McdResult, MetricError> {
    if reference.sample_rate_hz() != estimate.sample_rate_hz() {
        return Err(MetricError::RateMismatch {
            reference: reference.sample_rate_hz(),
            estimate: estimate.sample_rate_hz(),
        });
    }
    if reference.power() <= 0.0 || estimate.power() <= 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let cfg = StftConfig::FEATURES;
    let (ref_ceps_full, ref_energy) = cepstra_and_energy(reference, &cfg, n_coeffs)?;
    let (est_ceps, _) = cepstra_and_energy(estimate, &cfg, n_coeffs)?;

    let max_energy = ref_energy.iter().cloned().fold(0.0f64, f64::max);
    if max_energy <= 0.0 {
        return Err(MetricError::AllFramesGated);
    }
    let gate = max_energy * 10f64.powf(-GATE_DB / 10.0);
    let kept: Vec<usize> =
        (0..ref_energy.len()).filter(|&m| ref_energy[m] >= gate).collect();
    if kept.is_empty() {
        return Err(MetricError::AllFramesGated);
    }
    let mut ref_ceps = Array2::zeros((kept.len(), n_coeffs));
    for (row, &m) in kept.iter().enumerate() {
        ref_ceps.row_mut(row).assign(&ref_ceps_full.row(m));
    }

    let (total, path) = dtw(&ref_ceps, &est_ceps);
    let value_db = MCD_SCALE * total / path.len() as f64;
    Ok(McdResult { value_db, path, kept_ref_frames: kept, ref_cepstra: ref_ceps, est_cepstra: est_ceps })
}

/// [`mcd_detailed`] reduced to the score.
pub fn mcd(reference: &Waveform, estimate: &Waveform, n_coeffs: usize) -> Result<f64, MetricError> {
    Ok(mcd_detailed(reference, estimate, n_coeffs)?.value_db)
}
