//! Rational-ratio resampling with a Kaiser-windowed sinc kernel.

use super::{AudioError, Waveform};

const HALF_WIDTH: usize = 48;
const KAISER_BETA: f64 = 10.0;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Modified Bessel function of the first kind, order zero (series form).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half_x = x / 2.0;
    for k in 1..64 {
        term *= (half_x / k as f64) * (half_x / k as f64);
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    sum
}

/// Windowed-sinc interpolation kernel at offset `t` (input-sample units)
/// with normalized cutoff `c` relative to the input Nyquist.
fn kernel(t: f64, c: f64, half: f64, i0_beta: f64) -> f64 {
    if t.abs() >= half {
        return 0.0;
    }
    let sinc = if t == 0.0 {
        c
    } else {
        let a = std::f64::consts::PI * c * t;
        c * a.sin() / a
    };
    let u = t / half;
    let window = bessel_i0(KAISER_BETA * (1.0 - u * u).max(0.0).sqrt()) / i0_beta;
    sinc * window
}

/// Index with reflection at both ends (no edge duplication).
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

/// Resample to `target_hz`. Equal rates return the input unchanged; otherwise
/// a polyphase windowed-sinc evaluation at the reduced ratio L/M produces
/// exactly `round(len * target / source)` output samples. Signal edges are
/// reflection-extended so the kernel never sees an artificial discontinuity.
pub fn resample(w: &Waveform, target_hz: u32) -> Result<Waveform, AudioError> {
    if target_hz == 0 {
        return Err(AudioError::InvalidRate(target_hz));
    }
    if target_hz == w.sample_rate_hz() {
        return Ok(w.clone());
    }
    let src = u64::from(w.sample_rate_hz());
    let dst = u64::from(target_hz);
    let out_len =
        ((w.len() as u128 * dst as u128 * 2 + src as u128) / (2 * src as u128)) as usize;
    if w.is_empty() || out_len == 0 {
        return Waveform::new(Vec::new(), target_hz);
    }

    let g = gcd(src, dst);
    let up = (dst / g) as usize; // L
    let down = (src / g) as usize; // M
    let cutoff = (up as f64 / down as f64).min(1.0);
    let half = HALF_WIDTH as f64;
    let i0_beta = bessel_i0(KAISER_BETA);

    let x = w.samples();
    let n = x.len();
    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len {
        // input-time position of output sample j is exactly j*M/L
        let pos = j * down;
        let base = (pos / up) as isize;
        let frac = (pos % up) as f64 / up as f64;
        let mut acc = 0.0;
        let lo = -(HALF_WIDTH as isize) + 1;
        for k in lo..=(HALF_WIDTH as isize) {
            let h = kernel(k as f64 - frac, cutoff, half, i0_beta);
            if h != 0.0 {
                acc += h * x[reflect(base + k, n)];
            }
        }
        out.push(acc);
    }
    Waveform::new(out, target_hz)
}
