//! Minimal RIFF/WAVE reader and writer.
//!
//! Read: PCM 16-bit or IEEE-float 32-bit, mono only. Write: PCM 16-bit mono,
//! little-endian. The 16-bit scale is `i / 32768` on read and
//! `round(x * 32768)` clamped to `[-32768, 32767]` on write, so reading back
//! a written file recovers every sample within one quantization step and
//! files round-trip bit-exactly through read-then-write.

use std::fs;
use std::path::Path;

use super::{AudioError, Waveform};
use crate::util::atomic_write;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

fn io_err(path: &Path, source: std::io::Error) -> AudioError {
    AudioError::Io { path: path.display().to_string(), source }
}

/// Read a mono WAV file into a [`Waveform`], scaling samples to [-1, 1].
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform, AudioError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    parse_wav(&bytes)
}

fn parse_wav(bytes: &[u8]) -> Result<Waveform, AudioError> {
    if bytes.len() < 12 {
        return Err(AudioError::Truncated("shorter than RIFF header".into()));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(AudioError::UnsupportedFormat("missing RIFF/WAVE marker".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12usize;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start.checked_add(size).ok_or_else(|| {
            AudioError::Truncated("chunk size overflows file".into())
        })?;
        if body_end > bytes.len() {
            return Err(AudioError::Truncated(format!(
                "chunk {} claims {} bytes past end of file",
                String::from_utf8_lossy(id),
                body_end - bytes.len()
            )));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(AudioError::Truncated("fmt chunk shorter than 16 bytes".into()));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => {
                data = Some(body);
            }
            _ => {}
        }
        // chunks are word-aligned
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| AudioError::Truncated("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| AudioError::Truncated("no data chunk".into()))?;
    if channels != 1 {
        return Err(AudioError::Multichannel(channels));
    }
    if rate == 0 {
        return Err(AudioError::InvalidRate(rate));
    }

    let samples = match (format, bits) {
        (FORMAT_PCM, 16) => {
            if data.len() % 2 != 0 {
                return Err(AudioError::Truncated("odd data chunk for 16-bit PCM".into()));
            }
            data.chunks_exact(2)
                .map(|c| f64::from(i16::from_le_bytes([c[0], c[1]])) / 32768.0)
                .collect()
        }
        (FORMAT_IEEE_FLOAT, 32) => {
            if data.len() % 4 != 0 {
                return Err(AudioError::Truncated("data chunk not a multiple of 4 for float".into()));
            }
            data.chunks_exact(4)
                .map(|c| {
                    let v = f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
                    if v.is_finite() {
                        v.clamp(-1.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        (f, b) => {
            return Err(AudioError::UnsupportedFormat(format!(
                "format code {f} with {b} bits per sample (want PCM16 or float32)"
            )))
        }
    };

    Waveform::new(samples, rate)
}

/// Quantize one sample to the 16-bit lattice used by [`write_wav`].
fn quantize_i16(x: f64) -> (i16, bool) {
    let clamped = x.clamp(-1.0, 1.0);
    let v = (clamped * 32768.0).round();
    let q = if v > 32767.0 { 32767 } else { v as i16 };
    (q, clamped != x)
}

/// Write a [`Waveform`] as 16-bit PCM mono. Samples outside [-1, 1] are
/// clamped and a single warning is emitted on stderr (superimposition can
/// transiently exceed full scale). The write is atomic per file.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let path = path.as_ref();
    let n = w.len();
    let data_len = n * 2;
    let mut bytes = Vec::with_capacity(44 + data_len);
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    bytes.extend_from_slice(b"WAVE");
    bytes.extend_from_slice(b"fmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    bytes.extend_from_slice(&1u16.to_le_bytes()); // mono
    bytes.extend_from_slice(&w.sample_rate_hz().to_le_bytes());
    let byte_rate = w.sample_rate_hz() * 2;
    bytes.extend_from_slice(&byte_rate.to_le_bytes());
    bytes.extend_from_slice(&2u16.to_le_bytes()); // block align
    bytes.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&(data_len as u32).to_le_bytes());

    let mut clamped = 0usize;
    for &s in w.samples() {
        let (q, was_clamped) = quantize_i16(s);
        if was_clamped {
            clamped += 1;
        }
        bytes.extend_from_slice(&q.to_le_bytes());
    }
    if clamped > 0 {
        eprintln!(
            "warning: {} of {} samples clamped to [-1, 1] writing {}",
            clamped,
            n,
            path.display()
        );
    }
    atomic_write(path, &bytes).map_err(|e| io_err(path, e))
}
