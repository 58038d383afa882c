//! Objective evaluation suite: SI-SDR, SD-SDR, SAR, MCD, STOI, and
//! manifest-driven corpus reports.
//!
//! All ratio metrics share the same guard rails: denominators are floored at
//! 1e-12 of the numerator and values are capped to +/-120 dB, so scores stay
//! finite and totally ordered for aggregation.

mod mcd;
mod report;
mod stoi;

pub use mcd::{mcd, mcd_detailed, McdResult, MCD_SCALE};
pub use report::{
    evaluate_corpus, render_table, EvalOptions, EvalTarget, MetricKind, MetricReport,
    SnrAggregate, UtteranceScores,
};
pub use stoi::stoi;

use thiserror::Error;

use crate::audio::{AudioError, Waveform};
use crate::spectral::SpectralError;

/// Cap applied to every dB-valued metric.
pub const DB_CAP: f64 = 120.0;
const REL_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("length mismatch: reference {reference} vs estimate {estimate} samples")]
    LengthMismatch { reference: usize, estimate: usize },
    #[error("sample rate mismatch: reference {reference} Hz vs estimate {estimate} Hz")]
    RateMismatch { reference: u32, estimate: u32 },
    #[error("zero-power reference")]
    ZeroReference,
    #[error("signal too short: need at least {need_ms} ms, got {got_ms} ms")]
    TooShort { need_ms: f64, got_ms: f64 },
    #[error("all reference frames fell below the energy gate")]
    AllFramesGated,
    #[error("no usable analysis segments (signal too uniform or too short)")]
    NoUsableSegments,
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("manifest error: {0}")]
    Manifest(String),
}

pub(crate) fn ratio_db(num: f64, den: f64) -> f64 {
    if num <= 0.0 {
        return -DB_CAP;
    }
    let den = den.max(num * REL_FLOOR);
    (10.0 * (num / den).log10()).clamp(-DB_CAP, DB_CAP)
}

fn check_pair(reference: &Waveform, estimate: &Waveform) -> Result<(), MetricError> {
    if reference.len() != estimate.len() {
        return Err(MetricError::LengthMismatch {
            reference: reference.len(),
            estimate: estimate.len(),
        });
    }
    if reference.sample_rate_hz() != estimate.sample_rate_hz() {
        return Err(MetricError::RateMismatch {
            reference: reference.sample_rate_hz(),
            estimate: estimate.sample_rate_hz(),
        });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn energy(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Scale-invariant signal-to-distortion ratio in dB. The reference is
/// rescaled by `alpha = <est, ref> / ||ref||^2` before measuring distortion,
/// so the score ignores the estimate's overall gain.
pub fn si_sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64, MetricError> {
    check_pair(reference, estimate)?;
    let r = reference.samples();
    let e = estimate.samples();
    let r_energy = energy(r);
    if r_energy <= 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let alpha = dot(e, r) / r_energy;
    let num = alpha * alpha * r_energy;
    let den: f64 = r.iter().zip(e).map(|(ri, ei)| {
        let d = alpha * ri - ei;
        d * d
    }).sum();
    Ok(ratio_db(num, den))
}

/// Scale-dependent SDR in dB: the numerator uses the optimally scaled
/// reference but the distortion term is the raw `ref - est` residual, so the
/// estimate's absolute level matters. Never exceeds [`si_sdr`].
pub fn sd_sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64, MetricError> {
    check_pair(reference, estimate)?;
    let r = reference.samples();
    let e = estimate.samples();
    let r_energy = energy(r);
    if r_energy <= 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let alpha = dot(e, r) / r_energy;
    let num = alpha * alpha * r_energy;
    let den: f64 = r.iter().zip(e).map(|(ri, ei)| {
        let d = ri - ei;
        d * d
    }).sum();
    Ok(ratio_db(num, den))
}

/// Signal-to-artifact ratio in dB, time-invariant scalar-projection variant:
/// the estimate is orthogonally projected onto span{reference, noise
/// reference}; whatever cannot be explained by that span is artifact energy.
/// Degrades to a rank-1 projection when the two references are collinear.
pub fn sar(
    reference: &Waveform,
    noise_reference: &Waveform,
    estimate: &Waveform,
) -> Result<f64, MetricError> {
    check_pair(reference, estimate)?;
    check_pair(noise_reference, estimate)?;
    let r = reference.samples();
    let n = noise_reference.samples();
    let e = estimate.samples();

    let g_rr = energy(r);
    let g_nn = energy(n);
    if g_rr <= 0.0 && g_nn <= 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let g_rn = dot(r, n);
    let b_r = dot(r, e);
    let b_n = dot(n, e);

    let det = g_rr * g_nn - g_rn * g_rn;
    let (c_r, c_n) = if det > REL_FLOOR * g_rr * g_nn {
        ((g_nn * b_r - g_rn * b_n) / det, (g_rr * b_n - g_rn * b_r) / det)
    } else if g_rr >= g_nn {
        // collinear or degenerate span: project onto the stronger axis
        (b_r / g_rr, 0.0)
    } else {
        (0.0, b_n / g_nn)
    };

    let mut p_energy = 0.0;
    let mut artifact_energy = 0.0;
    for i in 0..e.len() {
        let p = c_r * r[i] + c_n * n[i];
        p_energy += p * p;
        let a = e[i] - p;
        artifact_energy += a * a;
    }
    Ok(ratio_db(p_energy, artifact_energy))
}
