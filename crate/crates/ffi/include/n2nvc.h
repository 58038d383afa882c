/* n2nvc C API. Generated by cbindgen; do not edit. */

#ifndef N2NVC_H
#define N2NVC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum N2nStatus {
  N2N_STATUS_OK = 0,
  // A required pointer argument was null.
  N2N_STATUS_NULL_POINTER = 1,
  // An argument was out of range or inconsistent.
  N2N_STATUS_INVALID_ARGUMENT = 2,
  // File system failure.
  N2N_STATUS_IO_ERROR = 3,
  // Malformed or unsupported file contents.
  N2N_STATUS_FORMAT_ERROR = 4,
  // Lengths or sample rates of the operands disagree.
  N2N_STATUS_LENGTH_MISMATCH = 5,
  // The computation is undefined for these inputs (zero power, gated
  // frames, too-short signals).
  N2N_STATUS_NUMERIC_ERROR = 6,
  // Internal panic caught at the boundary.
  N2N_STATUS_PANIC = 7,
} N2nStatus;

// Separation front ends available over the C ABI.
typedef enum N2nDenoiser {
  // Pass-through: the background comes out silent.
  N2N_DENOISER_IDENTITY = 0,
  // Everything becomes background.
  N2N_DENOISER_ZERO = 1,
  // Magnitude spectral subtraction with library defaults.
  N2N_DENOISER_SPECSUB = 2,
  // Ideal-ratio-mask oracle; requires the aligned clean reference.
  N2N_DENOISER_IRM = 3,
} N2nDenoiser;

typedef enum N2nSuperimposeMode {
  N2N_SUPERIMPOSE_MODE_ADD = 0,
  N2N_SUPERIMPOSE_MODE_DROP = 1,
} N2nSuperimposeMode;

// Opaque mono waveform handle.
typedef struct N2nWaveform N2nWaveform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the calling thread's most recent error message into `buf` as a
// NUL-terminated string (truncating to `cap`). Returns the full message
// length in bytes, excluding the terminator.
//
// # Safety
// `buf` must point to `cap` writable bytes, or be null (query mode).
size_t n2n_last_error_message(char *buf, size_t cap);

// Wrap a sample buffer into a new waveform handle.
//
// # Safety
// `samples` must point to `len` readable doubles; `out` must be writable.
enum N2nStatus n2n_waveform_create(const double *samples,
                                   size_t len,
                                   uint32_t sample_rate_hz,
                                   struct N2nWaveform **out);

// Read a mono PCM16/float32 WAV file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum N2nStatus n2n_waveform_read_wav(const char *path, struct N2nWaveform **out);

// Write 16-bit PCM mono; out-of-range samples are clamped.
//
// # Safety
// `w` must be a live handle; `path` must be NUL-terminated.
enum N2nStatus n2n_waveform_write_wav(const struct N2nWaveform *w, const char *path);

// Number of samples (0 for a null handle).
//
// # Safety
// `w` must be a live handle or null.
size_t n2n_waveform_len(const struct N2nWaveform *w);

// Sample rate in Hz (0 for a null handle).
//
// # Safety
// `w` must be a live handle or null.
uint32_t n2n_waveform_sample_rate(const struct N2nWaveform *w);

// Copy all samples into a caller buffer of at least `cap` doubles.
//
// # Safety
// `out` must point to `cap` writable doubles.
enum N2nStatus n2n_waveform_copy_samples(const struct N2nWaveform *w, double *out, size_t cap);

// Release a handle returned by this library. Null is a no-op.
//
// # Safety
// `w` must be a pointer previously returned by this library, not yet freed.
void n2n_waveform_free(struct N2nWaveform *w);

// Windowed-sinc resampling to `target_hz`.
//
// # Safety
// `w` must be a live handle; `out` must be writable.
enum N2nStatus n2n_resample(const struct N2nWaveform *w,
                            uint32_t target_hz,
                            struct N2nWaveform **out);

// Cyclically tile `noise` from `offset` to `target_len` samples.
//
// # Safety
// `noise` must be a live handle; `out` must be writable.
enum N2nStatus n2n_fit_noise(const struct N2nWaveform *noise,
                             size_t target_len,
                             size_t offset,
                             struct N2nWaveform **out);

// Mix noise into speech at an exact SNR; the measured full-clip power
// ratio equals the request to floating-point precision. Any out-pointer
// may be null to skip that result.
//
// # Safety
// Handles must be live; non-null out-pointers must be writable.
enum N2nStatus n2n_mix_at_snr(const struct N2nWaveform *speech,
                              const struct N2nWaveform *noise,
                              double snr_db,
                              struct N2nWaveform **out_noisy,
                              struct N2nWaveform **out_scaled_noise,
                              double *out_gain);

// Run a denoiser and return the speech estimate plus the exact residual
// background (`noisy - estimate` per sample). `clean_or_null` is required
// for the IRM oracle and ignored otherwise.
//
// # Safety
// Handles must be live; out-pointers must be writable.
enum N2nStatus n2n_separate(const struct N2nWaveform *noisy,
                            enum N2nDenoiser denoiser,
                            const struct N2nWaveform *clean_or_null,
                            struct N2nWaveform **out_speech,
                            struct N2nWaveform **out_background);

// Add the background back onto converted speech, or drop it.
//
// # Safety
// Handles must be live; `out` must be writable.
enum N2nStatus n2n_superimpose(const struct N2nWaveform *converted,
                               const struct N2nWaveform *background,
                               enum N2nSuperimposeMode mode,
                               struct N2nWaveform **out);

// Scale-invariant SDR in dB (capped at +/-120).
//
// # Safety
// Handles must be live; `out_db` must be writable.
enum N2nStatus n2n_si_sdr(const struct N2nWaveform *reference,
                          const struct N2nWaveform *estimate,
                          double *out_db);

// Scale-dependent SDR in dB; never exceeds the SI-SDR of the same pair.
//
// # Safety
// Handles must be live; `out_db` must be writable.
enum N2nStatus n2n_sd_sdr(const struct N2nWaveform *reference,
                          const struct N2nWaveform *estimate,
                          double *out_db);

// Signal-to-artifact ratio in dB (scalar projection onto the span of the
// two references).
//
// # Safety
// Handles must be live; `out_db` must be writable.
enum N2nStatus n2n_sar(const struct N2nWaveform *reference,
                       const struct N2nWaveform *noise_reference,
                       const struct N2nWaveform *estimate,
                       double *out_db);

// Mel-cepstral distortion in dB over DTW-aligned cepstra c1..=n_coeffs.
//
// # Safety
// Handles must be live; `out_db` must be writable.
enum N2nStatus n2n_mcd(const struct N2nWaveform *reference,
                       const struct N2nWaveform *estimate,
                       size_t n_coeffs,
                       double *out_db);

// Short-time objective intelligibility in [-1, 1].
//
// # Safety
// Handles must be live; `out` must be writable.
enum N2nStatus n2n_stoi(const struct N2nWaveform *reference,
                        const struct N2nWaveform *estimate,
                        double *out);

// Mu-law compand and quantize to 8-bit codes. `out_codes` must hold at
// least as many bytes as the waveform has samples.
//
// # Safety
// `w` must be live; `out_codes` must point to `cap` writable bytes.
enum N2nStatus n2n_mulaw_encode(const struct N2nWaveform *w,
                                uint32_t mu,
                                uint8_t *out_codes,
                                size_t cap);

// Expand 8-bit mu-law codes back into a waveform handle.
//
// # Safety
// `codes` must point to `len` readable bytes; `out` must be writable.
enum N2nStatus n2n_mulaw_decode(const uint8_t *codes,
                                size_t len,
                                uint32_t mu,
                                uint32_t sample_rate_hz,
                                struct N2nWaveform **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* N2NVC_H */
