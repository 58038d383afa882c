//! Deterministic synthetic signals for tests, demos, and self-checks.
//!
//! Everything here is a pure function of its key/seed, so corpora built from
//! these generators are reproducible byte-for-byte.

use rand::Rng;

use crate::audio::Waveform;
use crate::util::derive_rng;

/// Uniform white noise in [-amplitude, amplitude].
pub fn white_noise(key: &str, len: usize, sample_rate_hz: u32, amplitude: f64) -> Waveform {
    let mut rng = derive_rng(0x6e6f_6973, key);
    let samples = (0..len).map(|_| rng.gen_range(-amplitude..amplitude)).collect();
    Waveform::new(samples, sample_rate_hz).expect("finite by construction")
}

/// Pure sine at `freq` Hz.
pub fn tone(freq: f64, len: usize, sample_rate_hz: u32, amplitude: f64) -> Waveform {
    let w = 2.0 * std::f64::consts::PI * freq / f64::from(sample_rate_hz);
    let samples = (0..len).map(|i| amplitude * (w * i as f64).sin()).collect();
    Waveform::new(samples, sample_rate_hz).expect("finite by construction")
}

/// Speech-shaped test signal: a harmonic series under a slowly wandering
/// fundamental, formant-like spectral emphasis, syllabic amplitude
/// modulation, and a low noise floor. Not speech, but modulated and
/// band-structured enough to exercise separation, intelligibility, and
/// cepstral metrics.
pub fn speech_like(key: &str, len: usize, sample_rate_hz: u32) -> Waveform {
    let mut rng = derive_rng(0x7370_6565, key);
    let sr = f64::from(sample_rate_hz);
    let f0_base: f64 = rng.gen_range(90.0..200.0);
    let vibrato_hz: f64 = rng.gen_range(0.2..0.6);
    let syllable_hz: f64 = rng.gen_range(2.5..4.5);
    let syllable_phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let harmonic_phases: Vec<f64> =
        (0..16).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();

    // formant-like emphasis bumps
    let formants = [(500.0, 150.0, 1.0), (1500.0, 250.0, 0.6), (2500.0, 350.0, 0.3)];
    let emphasis = |f: f64| -> f64 {
        formants
            .iter()
            .map(|&(fc, bw, g)| g * (-((f - fc) / bw).powi(2)).exp())
            .sum::<f64>()
            + 0.05
    };

    let mut samples = Vec::with_capacity(len);
    let mut phase = 0.0f64;
    let nyquist = sr / 2.0;
    for i in 0..len {
        let t = i as f64 / sr;
        let f0 = f0_base * (1.0 + 0.12 * (std::f64::consts::TAU * vibrato_hz * t).sin());
        phase += std::f64::consts::TAU * f0 / sr;
        let mut v = 0.0;
        for (k, &ph) in harmonic_phases.iter().enumerate() {
            let h = (k + 1) as f64;
            let fh = f0 * h;
            if fh >= nyquist * 0.95 {
                break;
            }
            v += emphasis(fh) / h * (phase * h + ph).sin();
        }
        // syllabic envelope, floored well above the -40 dB energy gate
        let env = 0.55 + 0.45 * (std::f64::consts::TAU * syllable_hz * t + syllable_phase).sin();
        let env = env.max(0.12);
        let hiss = rng.gen_range(-1.0..1.0) * 0.01;
        samples.push(v * env + hiss);
    }
    let w = Waveform::new(samples, sample_rate_hz).expect("finite by construction");
    let peak = w.peak();
    if peak == 0.0 {
        return w;
    }
    let scale = 0.5 / peak;
    Waveform::new(w.samples().iter().map(|s| s * scale).collect(), sample_rate_hz)
        .expect("finite by construction")
}
