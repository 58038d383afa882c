//! Short-time objective intelligibility.
//!
//! Classic recipe: resample to 10 kHz, drop frames whose reference energy is
//! more than 40 dB below the loudest frame, decompose into 15 one-third
//! octave bands starting at 150 Hz (256-sample Hann frames, 50% overlap,
//! 512-point FFT), then correlate clean and degraded band envelopes over
//! 384 ms segments (30 frames) after per-segment normalization and clipping
//! at -15 dB SDR. The score is the mean correlation.
//!
//! Band envelopes are spectral magnitudes, so the score is insensitive to
//! the estimate's sign and overall gain.

use realfft::RealFftPlanner;

use super::{check_pair, MetricError};
use crate::audio::{resample, Waveform};
use crate::spectral::hann_periodic;

const STOI_RATE: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = 128;
const FFT_LEN: usize = 512;
const N_BANDS: usize = 15;
const FIRST_CENTER_HZ: f64 = 150.0;
const SEGMENT_FRAMES: usize = 30;
const DYN_RANGE_DB: f64 = 40.0;
/// Clipping bound: `(1 + 10^(15/20)) * x`.
const CLIP_FACTOR: f64 = 6.623413251903491;

/// Frame starts for a hop of [`HOP`]; frames are fully contained.
fn frame_starts(len: usize) -> Vec<usize> {
    if len < FRAME {
        return Vec::new();
    }
    (0..=(len - FRAME)).step_by(HOP).collect()
}

/// Drop frames whose *reference* energy sits below the dynamic range, then
/// overlap-add the surviving windowed frames of both signals back together.
fn remove_silent_frames(reference: &[f64], estimate: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let window = hann_periodic(FRAME);
    let starts = frame_starts(reference.len());
    if starts.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let energies_db: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..FRAME).map(|i| (reference[s + i] * window[i]).powi(2)).sum();
            10.0 * (e + 1e-300).log10()
        })
        .collect();
    let max_db = energies_db.iter().cloned().fold(f64::MIN, f64::max);
    let kept: Vec<usize> = (0..starts.len())
        .filter(|&m| energies_db[m] > max_db - DYN_RANGE_DB)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }

    let out_len = (kept.len() - 1) * HOP + FRAME;
    let mut r_out = vec![0.0; out_len];
    let mut e_out = vec![0.0; out_len];
    for (count, &m) in kept.iter().enumerate() {
        let src = starts[m];
        let dst = count * HOP;
        for i in 0..FRAME {
            r_out[dst + i] += reference[src + i] * window[i];
            e_out[dst + i] += estimate[src + i] * window[i];
        }
    }
    (r_out, e_out)
}

/// One-third octave band bin ranges `[lo, hi)` over the 512-point spectrum.
fn third_octave_bands() -> Vec<(usize, usize)> {
    let bin_hz = f64::from(STOI_RATE) / FFT_LEN as f64;
    let nearest = |f: f64| -> usize {
        ((f / bin_hz).round() as usize).min(FFT_LEN / 2)
    };
    (0..N_BANDS)
        .map(|j| {
            let cf = FIRST_CENTER_HZ * 2f64.powf(j as f64 / 3.0);
            let lo = nearest(cf * 2f64.powf(-1.0 / 6.0));
            let hi = nearest(cf * 2f64.powf(1.0 / 6.0));
            (lo, hi.max(lo + 1))
        })
        .collect()
}

/// Band envelope matrix, shape (bands, frames): per-frame L2 norm of the
/// spectrum bins inside each band.
fn band_envelopes(x: &[f64]) -> Vec<Vec<f64>> {
    let window = hann_periodic(FRAME);
    let starts = frame_starts(x.len());
    let bands = third_octave_bands();

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(FFT_LEN);
    let mut buf = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();

    let mut env = vec![vec![0.0; starts.len()]; N_BANDS];
    for (m, &s) in starts.iter().enumerate() {
        for i in 0..FRAME {
            buf[i] = x[s + i] * window[i];
        }
        buf[FRAME..].fill(0.0);
        fft.process_with_scratch(&mut buf, &mut spectrum, &mut scratch)
            .expect("fft lengths are planned consistently");
        for (j, &(lo, hi)) in bands.iter().enumerate() {
            let e: f64 = spectrum[lo..hi].iter().map(|c| c.norm_sqr()).sum();
            env[j][m] = e.sqrt();
        }
    }
    env
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let den = (sxx * syy).sqrt();
    if den <= 1e-200 {
        None
    } else {
        Some(sxy / den)
    }
}

/// STOI score in [-1, 1]; identical signals score 1.
pub fn stoi(reference: &Waveform, estimate: &Waveform) -> Result<f64, MetricError> {
    check_pair(reference, estimate)?;
    let need_ms = (FRAME + (SEGMENT_FRAMES - 1) * HOP) as f64 * 1000.0 / f64::from(STOI_RATE);
    let got_ms = reference.duration_s() * 1000.0;
    if got_ms < need_ms {
        return Err(MetricError::TooShort { need_ms, got_ms });
    }
    let r10 = resample(reference, STOI_RATE)?;
    let e10 = resample(estimate, STOI_RATE)?;

    let (r, e) = remove_silent_frames(r10.samples(), e10.samples());
    let env_r = band_envelopes(&r);
    let env_e = band_envelopes(&e);
    let frames = env_r.first().map_or(0, Vec::len);
    if frames < SEGMENT_FRAMES {
        return Err(MetricError::TooShort {
            need_ms,
            got_ms: (r.len() as f64) * 1000.0 / f64::from(STOI_RATE),
        });
    }

    let mut sum = 0.0;
    let mut count = 0usize;
    for j in 0..N_BANDS {
        for end in SEGMENT_FRAMES..=frames {
            let x = &env_r[j][end - SEGMENT_FRAMES..end];
            let y = &env_e[j][end - SEGMENT_FRAMES..end];
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let ey: f64 = y.iter().map(|v| v * v).sum();
            if ey <= 0.0 {
                continue;
            }
            let alpha = (ex / ey).sqrt();
            let clipped: Vec<f64> = x
                .iter()
                .zip(y)
                .map(|(xi, yi)| (alpha * yi).min(CLIP_FACTOR * xi))
                .collect();
            if let Some(d) = pearson(x, &clipped) {
                sum += d;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(MetricError::NoUsableSegments);
    }
    Ok(sum / count as f64)
}
