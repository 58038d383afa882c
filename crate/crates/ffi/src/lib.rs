//! C ABI over the n2nvc toolkit.
//!
//! Conventions: waveforms are opaque heap handles created and freed by this
//! library; every fallible call returns an [`N2nStatus`] and writes results
//! through out-pointers; the most recent failure message for the calling
//! thread is available via [`n2n_last_error_message`]. All functions are
//! panic-safe at the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use n2nvc::audio::{
    mulaw_decode, mulaw_encode, read_wav, resample, write_wav, AudioError, MuLawCode, Waveform,
};
use n2nvc::metrics::{mcd, sar, sd_sdr, si_sdr, stoi, MetricError};
use n2nvc::mixing::{fit_noise, mix_at_snr, MixError};
use n2nvc::separation::{
    separate, superimpose, IdentityDenoiser, IrmOracleDenoiser, SeparationError, SpecSubDenoiser,
    SuperimposeMode, ZeroDenoiser,
};
use n2nvc::spectral::StftConfig;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum N2nStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or inconsistent.
    InvalidArgument = 2,
    /// File system failure.
    IoError = 3,
    /// Malformed or unsupported file contents.
    FormatError = 4,
    /// Lengths or sample rates of the operands disagree.
    LengthMismatch = 5,
    /// The computation is undefined for these inputs (zero power, gated
    /// frames, too-short signals).
    NumericError = 6,
    /// Internal panic caught at the boundary.
    Panic = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: N2nStatus, msg: impl Into<String>) -> N2nStatus {
    set_error(msg);
    status
}

/// Copy the calling thread's most recent error message into `buf` as a
/// NUL-terminated string (truncating to `cap`). Returns the full message
/// length in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must point to `cap` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn n2n_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

fn audio_status(e: &AudioError) -> N2nStatus {
    match e {
        AudioError::Io { .. } => N2nStatus::IoError,
        AudioError::Truncated(_) | AudioError::UnsupportedFormat(_) | AudioError::Multichannel(_) => {
            N2nStatus::FormatError
        }
        _ => N2nStatus::InvalidArgument,
    }
}

fn metric_status(e: &MetricError) -> N2nStatus {
    match e {
        MetricError::LengthMismatch { .. } | MetricError::RateMismatch { .. } => {
            N2nStatus::LengthMismatch
        }
        MetricError::Audio(a) => audio_status(a),
        MetricError::Spectral(_) => N2nStatus::InvalidArgument,
        _ => N2nStatus::NumericError,
    }
}

fn mix_status(e: &MixError) -> N2nStatus {
    match e {
        MixError::LengthMismatch { .. } | MixError::RateMismatch { .. } => {
            N2nStatus::LengthMismatch
        }
        MixError::Io { .. } => N2nStatus::IoError,
        MixError::Audio(a) => audio_status(a),
        MixError::ZeroPower(_) | MixError::NonFiniteSnr(_) => N2nStatus::NumericError,
        _ => N2nStatus::InvalidArgument,
    }
}

fn separation_status(e: &SeparationError) -> N2nStatus {
    match e {
        SeparationError::OutputLengthMismatch { .. }
        | SeparationError::OutputRateMismatch { .. }
        | SeparationError::MisalignedReference { .. } => N2nStatus::LengthMismatch,
        SeparationError::Audio(a) => audio_status(a),
        _ => N2nStatus::InvalidArgument,
    }
}

/// Opaque mono waveform handle.
pub struct N2nWaveform(Waveform);

fn guard(f: impl FnOnce() -> N2nStatus) -> N2nStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(N2nStatus::Panic, "internal panic"),
    }
}

unsafe fn waveform_ref<'a>(p: *const N2nWaveform) -> Option<&'a Waveform> {
    p.as_ref().map(|w| &w.0)
}

unsafe fn expect_out<'a, T>(p: *mut T) -> Option<&'a mut T> {
    p.as_mut()
}

fn hand_out(out: *mut *mut N2nWaveform, w: Waveform) -> N2nStatus {
    unsafe {
        *out = Box::into_raw(Box::new(N2nWaveform(w)));
    }
    N2nStatus::Ok
}

unsafe fn c_path<'a>(path: *const c_char) -> Result<&'a str, N2nStatus> {
    if path.is_null() {
        return Err(fail(N2nStatus::NullPointer, "path is null"));
    }
    CStr::from_ptr(path).to_str().map_err(|_| {
        fail(N2nStatus::InvalidArgument, "path is not valid UTF-8")
    })
}

/// Wrap a sample buffer into a new waveform handle.
///
/// # Safety
/// `samples` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn n2n_waveform_create(
    samples: *const f64,
    len: usize,
    sample_rate_hz: u32,
    out: *mut *mut N2nWaveform,
) -> N2nStatus {
    guard(|| {
        if out.is_null() || (samples.is_null() && len > 0) {
            return fail(N2nStatus::NullPointer, "null argument");
        }
        let data = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(samples, len).to_vec()
        };
        match Waveform::new(data, sample_rate_hz) {
            Ok(w) => hand_out(out, w),
            Err(e) => fail(audio_status(&e), e.to_string()),
        }
    })
}

/// Read a mono PCM16/float32 WAV file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn n2n_waveform_read_wav(
    path: *const c_char,
    out: *mut *mut N2nWaveform,
) -> N2nStatus {
    guard(|| {
        if out.is_null() {
            return fail(N2nStatus::NullPointer, "out is null");
        }
        let path = match c_path(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match read_wav(path) {
            Ok(w) => hand_out(out, w),
            Err(e) => fail(audio_status(&e), e.to_string()),
        }
    })
}

/// Write 16-bit PCM mono; out-of-range samples are clamped.
///
/// # Safety
/// `w` must be a live handle; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn n2n_waveform_write_wav(
    w: *const N2nWaveform,
    path: *const c_char,
) -> N2nStatus {
    guard(|| {
        let Some(w) = waveform_ref(w) else {
            return fail(N2nStatus::NullPointer, "waveform is null");
        };
        let path = match c_path(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match write_wav(w, path) {
            Ok(()) => N2nStatus::Ok,
            Err(e) => fail(audio_status(&e), e.to_string()),
        }
    })
}

/// Number of samples (0 for a null handle).
///
/// # Safety
/// `w` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn n2n_waveform_len(w: *const N2nWaveform) -> usize {
    waveform_ref(w).map_or(0, Waveform::len)
}

/// Sample rate in Hz (0 for a null handle).
///
/// # Safety
/// `w` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn n2n_waveform_sample_rate(w: *const N2nWaveform) -> u32 {
    waveform_ref(w).map_or(0, Waveform::sample_rate_hz)
}

/// Copy all samples into a caller buffer of at least `cap` doubles.
///
/// # Safety
/// `out` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn n2n_waveform_copy_samples(
    w: *const N2nWaveform,
    out: *mut f64,
    cap: usize,
) -> N2nStatus {
    guard(|| {
        let Some(w) = waveform_ref(w) else {
            return fail(N2nStatus::NullPointer, "waveform is null");
        };
        if out.is_null() {
            return fail(N2nStatus::NullPointer, "out is null");
        }
        if cap < w.len() {
            return fail(
                N2nStatus::InvalidArgument,
                format!("buffer holds {cap} samples, waveform has {}", w.len()),
            );
        }
        std::ptr::copy_nonoverlapping(w.samples().as_ptr(), out, w.len());
        N2nStatus::Ok
    })
}

/// Release a handle returned by this library. Null is a no-op.
///
/// # Safety
/// `w` must be a pointer previously returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn n2n_waveform_free(w: *mut N2nWaveform) {
    if !w.is_null() {
        drop(Box::from_raw(w));
    }
}

/// Windowed-sinc resampling to `target_hz`.
///
/// # Safety
/// `w` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn n2n_resample(
    w: *const N2nWaveform,
    target_hz: u32,
    out: *mut *mut N2nWaveform,
) -> N2nStatus {
    guard(|| {
        let Some(w) = waveform_ref(w) else {
            return fail(N2nStatus::NullPointer, "waveform is null");
        };
        if out.is_null() {
            return fail(N2nStatus::NullPointer, "out is null");
        }
        match resample(w, target_hz) {
            Ok(r) => hand_out(out, r),
            Err(e) => fail(audio_status(&e), e.to_string()),
        }
    })
}

/// Cyclically tile `noise` from `offset` to `target_len` samples.
///
/// # Safety
/// `noise` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn n2n_fit_noise(
    noise: *const N2nWaveform,
    target_len: usize,
    offset: usize,
    out: *mut *mut N2nWaveform,
) -> N2nStatus {
    guard(|| {
        let Some(noise) = waveform_ref(noise) else {
            return fail(N2nStatus::NullPointer, "noise is null");
        };
        if out.is_null() {
            return fail(N2nStatus::NullPointer, "out is null");
        }
        match fit_noise(noise, target_len, offset) {
            Ok(w) => hand_out(out, w),
            Err(e) => fail(mix_status(&e), e.to_string()),
        }
    })
}

/// Mix noise into speech at an exact SNR; the measured full-clip power
/// ratio equals the request to floating-point precision. Any out-pointer
/// may be null to skip that result.
///
/// # Safety
/// Handles must be live; non-null out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn n2n_mix_at_snr(
    speech: *const N2nWaveform,
    noise: *const N2nWaveform,
    snr_db: f64,
    out_noisy: *mut *mut N2nWaveform,
    out_scaled_noise: *mut *mut N2nWaveform,
    out_gain: *mut f64,
) -> N2nStatus {
    guard(|| {
        let (Some(speech), Some(noise)) = (waveform_ref(speech), waveform_ref(noise)) else {
            return fail(N2nStatus::NullPointer, "speech or noise is null");
        };
        match mix_at_snr(speech, noise, snr_db) {
            Ok(mixed) => {
                if let Some(g) = expect_out(out_gain) {
                    *g = mixed.gain;
                }
                if !out_noisy.is_null() {
                    hand_out(out_noisy, mixed.noisy);
                }
                if !out_scaled_noise.is_null() {
                    hand_out(out_scaled_noise, mixed.scaled_noise);
                }
                N2nStatus::Ok
            }
            Err(e) => fail(mix_status(&e), e.to_string()),
        }
    })
}

/// Separation front ends available over the C ABI.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum N2nDenoiser {
    /// Pass-through: the background comes out silent.
    Identity = 0,
    /// Everything becomes background.
    Zero = 1,
    /// Magnitude spectral subtraction with library defaults.
    Specsub = 2,
    /// Ideal-ratio-mask oracle; requires the aligned clean reference.
    Irm = 3,
}

/// Run a denoiser and return the speech estimate plus the exact residual
/// background (`noisy - estimate` per sample). `clean_or_null` is required
/// for the IRM oracle and ignored otherwise.
///
/// # Safety
/// Handles must be live; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn n2n_separate(
    noisy: *const N2nWaveform,
    denoiser: N2nDenoiser,
    clean_or_null: *const N2nWaveform,
    out_speech: *mut *mut N2nWaveform,
    out_background: *mut *mut N2nWaveform,
) -> N2nStatus {
    guard(|| {
        let Some(noisy) = waveform_ref(noisy) else {
            return fail(N2nStatus::NullPointer, "noisy is null");
        };
        if out_speech.is_null() || out_background.is_null() {
            return fail(N2nStatus::NullPointer, "out pointers are null");
        }
        let result = match denoiser {
            N2nDenoiser::Identity => separate(&IdentityDenoiser, noisy),
            N2nDenoiser::Zero => separate(&ZeroDenoiser, noisy),
            N2nDenoiser::Specsub => separate(&SpecSubDenoiser::default(), noisy),
            N2nDenoiser::Irm => {
                let Some(clean) = waveform_ref(clean_or_null) else {
                    return fail(N2nStatus::NullPointer, "irm oracle needs a clean reference");
                };
                let oracle = IrmOracleDenoiser::new(clean.clone(), StftConfig::SEPARATION);
                separate(&oracle, noisy)
            }
        };
        match result {
            Ok(r) => {
                hand_out(out_speech, r.speech_estimate);
                hand_out(out_background, r.background);
                N2nStatus::Ok
            }
            Err(e) => fail(separation_status(&e), e.to_string()),
        }
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum N2nSuperimposeMode {
    Add = 0,
    Drop = 1,
}

/// Add the background back onto converted speech, or drop it.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn n2n_superimpose(
    converted: *const N2nWaveform,
    background: *const N2nWaveform,
    mode: N2nSuperimposeMode,
    out: *mut *mut N2nWaveform,
) -> N2nStatus {
    guard(|| {
        let (Some(converted), Some(background)) =
            (waveform_ref(converted), waveform_ref(background))
        else {
            return fail(N2nStatus::NullPointer, "converted or background is null");
        };
        if out.is_null() {
            return fail(N2nStatus::NullPointer, "out is null");
        }
        let mode = match mode {
            N2nSuperimposeMode::Add => SuperimposeMode::Add,
            N2nSuperimposeMode::Drop => SuperimposeMode::Drop,
        };
        match superimpose(converted, background, mode) {
            Ok(w) => hand_out(out, w),
            Err(e) => fail(separation_status(&e), e.to_string()),
        }
    })
}

unsafe fn metric_pair(
    reference: *const N2nWaveform,
    estimate: *const N2nWaveform,
    out: *mut f64,
    compute: impl FnOnce(&Waveform, &Waveform) -> Result<f64, MetricError>,
) -> N2nStatus {
    let (Some(reference), Some(estimate)) = (waveform_ref(reference), waveform_ref(estimate))
    else {
        return fail(N2nStatus::NullPointer, "reference or estimate is null");
    };
    let Some(out) = expect_out(out) else {
        return fail(N2nStatus::NullPointer, "out is null");
    };
    match compute(reference, estimate) {
        Ok(v) => {
            *out = v;
            N2nStatus::Ok
        }
        Err(e) => fail(metric_status(&e), e.to_string()),
    }
}

/// Scale-invariant SDR in dB (capped at +/-120).
///
/// # Safety
/// Handles must be live; `out_db` must be writable.
#[no_mangle]
pub unsafe extern "C" fn n2n_si_sdr(
    reference: *const N2nWaveform,
    estimate: *const N2nWaveform,
    out_db: *mut f64,
) -> N2nStatus {
    guard(|| metric_pair(reference, estimate, out_db, si_sdr))
}

/// Scale-dependent SDR in dB; never exceeds the SI-SDR of the same pair.
///
/// # Safety
/// Handles must be live; `out_db` must be writable.
#[no_mangle]
pub unsafe extern "C" fn n2n_sd_sdr(
    reference: *const N2nWaveform,
    estimate: *const N2nWaveform,
    out_db: *mut f64,
) -> N2nStatus {
    guard(|| metric_pair(reference, estimate, out_db, sd_sdr))
}

/// Signal-to-artifact ratio in dB (scalar projection onto the span of the
/// two references).
///
/// # Safety
/// Handles must be live; `out_db` must be writable.
#[no_mangle]
pub unsafe extern "C" fn n2n_sar(
    reference: *const N2nWaveform,
    noise_reference: *const N2nWaveform,
    estimate: *const N2nWaveform,
    out_db: *mut f64,
) -> N2nStatus {
    guard(|| {
        let Some(noise_reference) = waveform_ref(noise_reference) else {
            return fail(N2nStatus::NullPointer, "noise reference is null");
        };
        metric_pair(reference, estimate, out_db, |r, e| sar(r, noise_reference, e))
    })
}

/// Mel-cepstral distortion in dB over DTW-aligned cepstra c1..=n_coeffs.
///
/// # Safety
/// Handles must be live; `out_db` must be writable.
#[no_mangle]
pub unsafe extern "C" fn n2n_mcd(
    reference: *const N2nWaveform,
    estimate: *const N2nWaveform,
    n_coeffs: usize,
    out_db: *mut f64,
) -> N2nStatus {
    guard(|| metric_pair(reference, estimate, out_db, |r, e| mcd(r, e, n_coeffs)))
}

/// Short-time objective intelligibility in [-1, 1].
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn n2n_stoi(
    reference: *const N2nWaveform,
    estimate: *const N2nWaveform,
    out: *mut f64,
) -> N2nStatus {
    guard(|| metric_pair(reference, estimate, out, stoi))
}

/// Mu-law compand and quantize to 8-bit codes. `out_codes` must hold at
/// least as many bytes as the waveform has samples.
///
/// # Safety
/// `w` must be live; `out_codes` must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn n2n_mulaw_encode(
    w: *const N2nWaveform,
    mu: u32,
    out_codes: *mut u8,
    cap: usize,
) -> N2nStatus {
    guard(|| {
        let Some(w) = waveform_ref(w) else {
            return fail(N2nStatus::NullPointer, "waveform is null");
        };
        if out_codes.is_null() {
            return fail(N2nStatus::NullPointer, "out_codes is null");
        }
        if cap < w.len() {
            return fail(
                N2nStatus::InvalidArgument,
                format!("buffer holds {cap} codes, waveform has {} samples", w.len()),
            );
        }
        match mulaw_encode(w, mu) {
            Ok(codes) => {
                std::ptr::copy_nonoverlapping(codes.codes().as_ptr(), out_codes, codes.len());
                N2nStatus::Ok
            }
            Err(e) => fail(N2nStatus::NumericError, e.to_string()),
        }
    })
}

/// Expand 8-bit mu-law codes back into a waveform handle.
///
/// # Safety
/// `codes` must point to `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn n2n_mulaw_decode(
    codes: *const u8,
    len: usize,
    mu: u32,
    sample_rate_hz: u32,
    out: *mut *mut N2nWaveform,
) -> N2nStatus {
    guard(|| {
        if out.is_null() || (codes.is_null() && len > 0) {
            return fail(N2nStatus::NullPointer, "null argument");
        }
        let data = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(codes, len).to_vec()
        };
        let decoded = mulaw_decode(&MuLawCode::new(data, sample_rate_hz), mu);
        hand_out(out, decoded)
    })
}
