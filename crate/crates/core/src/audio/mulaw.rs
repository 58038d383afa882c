//! Mu-law companding with 8-bit mid-rise quantization.
//!
//! `encode` compands with `y = sign(x) * ln(1 + mu|x|) / ln(1 + mu)` and
//! quantizes `y` onto 256 symmetric levels `y_k = 2k/255 - 1`; `decode`
//! inverts the companding at the level value. Codes 127 and 128 decode to
//! a symmetric pair straddling zero, +/-1 are exact levels, and decoding
//! then re-encoding is the identity on all 256 codes.

use super::{AudioError, Waveform};

/// Sequence of 8-bit mu-law codes plus the rate needed to decode back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MuLawCode {
    codes: Vec<u8>,
    sample_rate_hz: u32,
}

impl MuLawCode {
    pub fn new(codes: Vec<u8>, sample_rate_hz: u32) -> Self {
        Self { codes, sample_rate_hz }
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

fn compand_mag(x: f64, mu: f64) -> f64 {
    (1.0 + mu * x).ln() / (1.0 + mu).ln()
}

fn expand_mag(y: f64, mu: f64) -> f64 {
    ((1.0 + mu).powf(y) - 1.0) / mu
}

fn expand(y: f64, mu: f64) -> f64 {
    y.signum() * expand_mag(y.abs(), mu)
}

/// Compand and quantize to 256 levels. Samples must lie in [-1, 1].
/// The positive and negative halves are quantized on the magnitude axis so
/// the code lattice is bit-exactly odd-symmetric.
pub fn mulaw_encode(w: &Waveform, mu: u32) -> Result<MuLawCode, AudioError> {
    let mu = f64::from(mu.max(1));
    let mut codes = Vec::with_capacity(w.len());
    for &x in w.samples() {
        if x.abs() > 1.0 {
            return Err(AudioError::SampleOutOfRange(x));
        }
        // magnitude cell in 0..=127; cells are [m, m+1) on the 127.5*y axis
        let m = ((127.5 * compand_mag(x.abs(), mu)).floor() as i32).min(127);
        let k = if x.is_sign_negative() { 127 - m } else { 128 + m };
        codes.push(k as u8);
    }
    Ok(MuLawCode::new(codes, w.sample_rate_hz()))
}

/// Invert the companding at each code's level value. Levels sit at the cell
/// centers `+/-(m + 0.5) / 127.5` on the companded axis.
pub fn mulaw_decode(c: &MuLawCode, mu: u32) -> Waveform {
    let mu = f64::from(mu.max(1));
    let samples = c
        .codes
        .iter()
        .map(|&k| {
            let centered = f64::from(k) - 127.5; // +/- (m + 0.5)
            centered.signum() * expand_mag(centered.abs() / 127.5, mu)
        })
        .collect();
    Waveform::new(samples, c.sample_rate_hz).expect("expand is finite on valid codes")
}

/// Largest possible round-trip error `|x - decode(encode(x))|` over
/// `|x| <= 1`: the expanded half-cell adjacent to full scale.
pub fn mulaw_max_cell_error(mu: u32) -> f64 {
    let mu = f64::from(mu.max(1));
    expand(1.0, mu) - expand(1.0 - 1.0 / 255.0, mu)
}
