//! Noisy-to-noisy voice conversion toolkit.
//!
//! The pipeline treats a noisy utterance `x_n` as speech plus background,
//! separates it with a pluggable denoiser into an estimate `x_e` and the
//! residual background `b = x_n - x_e`, converts only the speech, and
//! superimposes the background back onto the converted result. Around that
//! core this crate provides:
//!
//! * [`audio`] — waveform type, WAV I/O, mu-law companding, resampling
//! * [`spectral`] — STFT/ISTFT, mel filterbank, log-mel features, cepstra
//! * [`mixing`] — SNR-exact noisy corpus synthesis with a replayable manifest
//! * [`separation`] — denoiser interface, residual extraction, superimposition
//! * [`metrics`] — SI-SDR, SD-SDR, SAR, MCD (DTW-aligned), STOI, corpus reports
//! * [`vq`] — vector-quantized bottleneck: codebook, EMA updates, losses
//! * [`complex_nn`] — complex-valued convolution / batch-norm / LSTM kernels
//! * [`synth`] — deterministic synthetic test signals
//!
//! Everything is deterministic given its inputs and an explicit seed; the
//! `n2nvc` binary exposes the pipeline stages as subcommands.

pub mod audio;
pub mod complex_nn;
pub mod metrics;
pub mod mixing;
pub mod separation;
pub mod spectral;
pub mod synth;
pub mod util;
pub mod vq;
