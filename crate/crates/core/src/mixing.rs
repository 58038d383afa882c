//! Noisy corpus synthesis at exact SNR with a replayable manifest.
//!
//! The mixing gain is chosen so the measured full-clip power ratio equals the
//! requested SNR to floating-point precision: `g = sqrt(P_speech / (P_noise *
//! 10^(snr/10)))`, `noisy = speech + g * noise`. Every random choice made
//! while building a corpus (noise clip, cyclic offset, SNR draw) is recorded
//! in a JSON-lines manifest that replays bit-exactly without the generator.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{read_wav, write_wav, AudioError, Waveform};
use crate::util::{atomic_write, derive_rng};

#[derive(Debug, Error)]
pub enum MixError {
    #[error("zero-power input: {0}")]
    ZeroPower(&'static str),
    #[error("length mismatch: speech {speech} vs noise {noise} samples")]
    LengthMismatch { speech: usize, noise: usize },
    #[error("sample rate mismatch: speech {speech} Hz vs noise {noise} Hz")]
    RateMismatch { speech: u32, noise: u32 },
    #[error("snr must be finite, got {0}")]
    NonFiniteSnr(f64),
    #[error("empty noise clip")]
    EmptyNoise,
    #[error("no usable files in {0}")]
    EmptyDir(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("bad manifest line {line}: {reason}")]
    BadManifest { line: usize, reason: String },
}

/// How each noisy utterance was synthesized; enough to replay the mix
/// bit-exactly without touching the random generator again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixManifestEntry {
    pub utt_id: String,
    pub clean_path: String,
    pub noise_path: String,
    pub snr_db: f64,
    pub seed: u64,
    pub noise_offset_samples: usize,
    pub noise_gain: f64,
}

/// Output of [`mix_at_snr`]: the mixture, the gain-scaled noise that was
/// added (so `noisy - speech == scaled_noise` exactly), and the gain.
#[derive(Debug, Clone)]
pub struct MixOutput {
    pub noisy: Waveform,
    pub scaled_noise: Waveform,
    pub gain: f64,
}

/// Mix `noise` into `speech` at an exact SNR measured over the full clip.
pub fn mix_at_snr(speech: &Waveform, noise: &Waveform, snr_db: f64) -> Result<MixOutput, MixError> {
    if !snr_db.is_finite() {
        return Err(MixError::NonFiniteSnr(snr_db));
    }
    if speech.len() != noise.len() {
        return Err(MixError::LengthMismatch { speech: speech.len(), noise: noise.len() });
    }
    if speech.sample_rate_hz() != noise.sample_rate_hz() {
        return Err(MixError::RateMismatch {
            speech: speech.sample_rate_hz(),
            noise: noise.sample_rate_hz(),
        });
    }
    let p_speech = speech.power();
    let p_noise = noise.power();
    if p_speech <= 0.0 {
        return Err(MixError::ZeroPower("speech"));
    }
    if p_noise <= 0.0 {
        return Err(MixError::ZeroPower("noise"));
    }
    let gain = (p_speech / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    mix_with_gain(speech, noise, gain)
}

/// Deterministic mix with a precomputed gain (the replay path).
pub fn mix_with_gain(
    speech: &Waveform,
    noise: &Waveform,
    gain: f64,
) -> Result<MixOutput, MixError> {
    if speech.len() != noise.len() {
        return Err(MixError::LengthMismatch { speech: speech.len(), noise: noise.len() });
    }
    let scaled: Vec<f64> = noise.samples().iter().map(|n| gain * n).collect();
    let noisy: Vec<f64> =
        speech.samples().iter().zip(&scaled).map(|(s, n)| s + n).collect();
    let rate = speech.sample_rate_hz();
    Ok(MixOutput {
        noisy: Waveform::new(noisy, rate)?,
        scaled_noise: Waveform::new(scaled, rate)?,
        gain,
    })
}

/// Cyclically tile `noise` starting at `offset`, truncated to `target_len`.
pub fn fit_noise(noise: &Waveform, target_len: usize, offset: usize) -> Result<Waveform, MixError> {
    if noise.is_empty() {
        return Err(MixError::EmptyNoise);
    }
    let src = noise.samples();
    let n = src.len();
    let samples = (0..target_len).map(|i| src[(offset + i) % n]).collect();
    Ok(Waveform::new(samples, noise.sample_rate_hz())?)
}

/// Requested SNR levels: a discrete set (every utterance is mixed at every
/// level) or a continuous range (one uniform draw per utterance).
#[derive(Debug, Clone, PartialEq)]
pub enum SnrSpec {
    Levels(Vec<f64>),
    Range(f64, f64),
}

impl SnrSpec {
    /// Parse `"7,11,15,19"` as levels or `"5:20"` as a range.
    pub fn parse(s: &str) -> Result<Self, String> {
        if let Some((lo, hi)) = s.split_once(':') {
            let lo: f64 = lo.trim().parse().map_err(|_| format!("bad snr range: {s}"))?;
            let hi: f64 = hi.trim().parse().map_err(|_| format!("bad snr range: {s}"))?;
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(format!("bad snr range: {s}"));
            }
            return Ok(Self::Range(lo, hi));
        }
        let levels: Result<Vec<f64>, _> =
            s.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match levels {
            Ok(v) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => Ok(Self::Levels(v)),
            _ => Err(format!("bad snr spec: {s}")),
        }
    }
}

/// Corpus build job. `pattern_split` locks the background pattern: when set,
/// the per-utterance random stream is keyed by the utterance text id (the
/// stem after the first occurrence of the split character) instead of the
/// full stem, so the same sentence spoken by different speakers receives the
/// same noise clip and offset.
#[derive(Debug, Clone)]
pub struct CorpusJob {
    pub clean_dir: PathBuf,
    pub noise_dir: PathBuf,
    pub snr: SnrSpec,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub pattern_split: Option<char>,
    /// When set, clips at any other rate are resampled here at ingestion
    /// (with a warning). The CLI passes the canonical 8 kHz pipeline rate.
    pub resample_to_hz: Option<u32>,
}

/// One warning produced while building (unreadable file, skipped entry).
#[derive(Debug, Clone, Serialize)]
pub struct BuildWarning {
    pub path: String,
    pub reason: String,
}

#[derive(Debug)]
pub struct BuildReport {
    pub manifest_path: PathBuf,
    pub entries: Vec<MixManifestEntry>,
    pub warnings: Vec<BuildWarning>,
    /// Wall-clock milliseconds spent per clean utterance, for log lines.
    pub timings_ms: Vec<(String, u128)>,
}

pub fn list_wavs(dir: &Path) -> Result<Vec<PathBuf>, MixError> {
    let rd = fs::read_dir(dir).map_err(|e| MixError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(MixError::EmptyDir(dir.display().to_string()));
    }
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Format an SNR level for use in utterance ids: `7` not `7.0`, `7.5` kept.
fn snr_tag(snr: f64) -> String {
    if snr == snr.trunc() {
        format!("{}", snr as i64)
    } else {
        format!("{snr}")
    }
}

/// Build a noisy corpus. Deterministic given the seed: random streams are
/// derived per utterance, so parallel and serial runs produce identical
/// manifests and WAVs. Unreadable inputs are skipped with a warning.
pub fn build_corpus(job: &CorpusJob) -> Result<BuildReport, MixError> {
    let clean_files = list_wavs(&job.clean_dir)?;
    let noise_files = list_wavs(&job.noise_dir)?;

    let ingest = |p: &Path| -> Result<Waveform, AudioError> {
        let w = read_wav(p)?;
        match job.resample_to_hz {
            Some(rate) if w.sample_rate_hz() != rate => {
                eprintln!(
                    "warning: resampling {} from {} Hz to {} Hz",
                    p.display(),
                    w.sample_rate_hz(),
                    rate
                );
                crate::audio::resample(&w, rate)
            }
            _ => Ok(w),
        }
    };

    // noise clips are reused across utterances; load them once
    let mut noises: Vec<(PathBuf, Option<Waveform>)> = Vec::with_capacity(noise_files.len());
    let mut warnings: Vec<BuildWarning> = Vec::new();
    for p in &noise_files {
        match ingest(p) {
            Ok(w) if w.power() > 0.0 => noises.push((p.clone(), Some(w))),
            Ok(_) => {
                warnings.push(BuildWarning {
                    path: p.display().to_string(),
                    reason: "silent noise clip skipped".into(),
                });
                noises.push((p.clone(), None));
            }
            Err(e) => {
                warnings.push(BuildWarning { path: p.display().to_string(), reason: e.to_string() });
                noises.push((p.clone(), None));
            }
        }
    }
    // keep indexing stable for the RNG draw, but reject if nothing is usable
    if noises.iter().all(|(_, w)| w.is_none()) {
        return Err(MixError::EmptyDir(job.noise_dir.display().to_string()));
    }

    fs::create_dir_all(&job.out_dir).map_err(|e| MixError::Io {
        path: job.out_dir.display().to_string(),
        source: e,
    })?;

    struct UttResult {
        entries: Vec<MixManifestEntry>,
        warnings: Vec<BuildWarning>,
        timing: (String, u128),
    }

    // one clean utterance: draw its background pattern, mix at each level
    let process_one = |clean_path: &PathBuf| -> UttResult {
        let utt_stem = stem(clean_path);
        let mut out = UttResult {
            entries: Vec::new(),
            warnings: Vec::new(),
            timing: (utt_stem.clone(), 0),
        };
        let clean = match ingest(clean_path) {
            Ok(w) if w.power() > 0.0 => w,
            Ok(_) => {
                out.warnings.push(BuildWarning {
                    path: clean_path.display().to_string(),
                    reason: "silent clean clip skipped".into(),
                });
                return out;
            }
            Err(e) => {
                out.warnings.push(BuildWarning {
                    path: clean_path.display().to_string(),
                    reason: e.to_string(),
                });
                return out;
            }
        };

        // pattern locking keys the stream by the utterance text id
        let rng_key = match job.pattern_split {
            Some(c) => utt_stem
                .split_once(c)
                .map(|(_, rest)| rest.to_string())
                .unwrap_or_else(|| utt_stem.clone()),
            None => utt_stem.clone(),
        };
        let mut rng = derive_rng(job.seed, &rng_key);

        // draw the background pattern once per utterance
        let (noise_path, noise) = {
            let mut pick = rng.gen_range(0..noises.len());
            let mut tries = 0;
            while noises[pick].1.is_none() && tries < noises.len() {
                pick = (pick + 1) % noises.len();
                tries += 1;
            }
            match &noises[pick].1 {
                Some(w) => (noises[pick].0.clone(), w),
                None => return out,
            }
        };
        let offset = rng.gen_range(0..noise.len());

        let snrs: Vec<f64> = match &job.snr {
            SnrSpec::Levels(levels) => levels.clone(),
            SnrSpec::Range(lo, hi) => {
                vec![if lo == hi { *lo } else { rng.gen_range(*lo..*hi) }]
            }
        };
        let multi = matches!(job.snr, SnrSpec::Levels(ref l) if l.len() > 1);

        for snr_db in snrs {
            let utt_id = if multi {
                format!("{utt_stem}_snr{}", snr_tag(snr_db))
            } else {
                utt_stem.clone()
            };
            let fitted = match fit_noise(noise, clean.len(), offset) {
                Ok(f) => f,
                Err(e) => {
                    out.warnings.push(BuildWarning {
                        path: noise_path.display().to_string(),
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let mixed = match mix_at_snr(&clean, &fitted, snr_db) {
                Ok(m) => m,
                Err(e) => {
                    out.warnings.push(BuildWarning {
                        path: clean_path.display().to_string(),
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let wav_path = job.out_dir.join(format!("{utt_id}.wav"));
            if let Err(e) = write_wav(&mixed.noisy, &wav_path) {
                out.warnings.push(BuildWarning {
                    path: wav_path.display().to_string(),
                    reason: e.to_string(),
                });
                continue;
            }
            out.entries.push(MixManifestEntry {
                utt_id,
                clean_path: clean_path.display().to_string(),
                noise_path: noise_path.display().to_string(),
                snr_db,
                seed: job.seed,
                noise_offset_samples: offset,
                noise_gain: mixed.gain,
            });
        }
        out
    };

    let results: Vec<UttResult> = clean_files
        .par_iter()
        .map(|clean_path| {
            let started = std::time::Instant::now();
            let mut out = process_one(clean_path);
            out.timing.1 = started.elapsed().as_millis();
            out
        })
        .collect();

    let mut entries: Vec<MixManifestEntry> = Vec::new();
    let mut timings_ms = Vec::new();
    for mut r in results {
        entries.append(&mut r.entries);
        warnings.append(&mut r.warnings);
        timings_ms.push(r.timing);
    }
    entries.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    timings_ms.sort();

    let manifest_path = job.out_dir.join("manifest.jsonl");
    write_manifest(&manifest_path, &entries)?;
    Ok(BuildReport { manifest_path, entries, warnings, timings_ms })
}

/// Serialize entries as JSON-lines with fixed key order.
pub fn write_manifest(path: &Path, entries: &[MixManifestEntry]) -> Result<(), MixError> {
    let mut buf = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut buf, e)
            .map_err(|e| MixError::BadManifest { line: 0, reason: e.to_string() })?;
        buf.write_all(b"\n").expect("vec write");
    }
    atomic_write(path, &buf).map_err(|e| MixError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn read_manifest(path: &Path) -> Result<Vec<MixManifestEntry>, MixError> {
    let text = fs::read_to_string(path).map_err(|e| MixError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: MixManifestEntry = serde_json::from_str(line)
            .map_err(|e| MixError::BadManifest { line: i + 1, reason: e.to_string() })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Re-create the noisy waveform and the scaled noise for a manifest entry
/// from its stored paths, offset, and gain. Matches the original mix
/// bit-exactly before WAV quantization.
pub fn replay_entry(entry: &MixManifestEntry) -> Result<MixOutput, MixError> {
    let clean = read_wav(&entry.clean_path)?;
    let noise = read_wav(&entry.noise_path)?;
    let fitted = fit_noise(&noise, clean.len(), entry.noise_offset_samples)?;
    mix_with_gain(&clean, &fitted, entry.noise_gain)
}

/// Group manifest entries by SNR level (ascending, bit-exact grouping).
pub fn group_by_snr(entries: &[MixManifestEntry]) -> Vec<(f64, Vec<&MixManifestEntry>)> {
    let mut groups: BTreeMap<u64, (f64, Vec<&MixManifestEntry>)> = BTreeMap::new();
    for e in entries {
        groups
            .entry(e.snr_db.to_bits())
            .or_insert_with(|| (e.snr_db, Vec::new()))
            .1
            .push(e);
    }
    let mut out: Vec<(f64, Vec<&MixManifestEntry>)> = groups.into_values().collect();
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}
