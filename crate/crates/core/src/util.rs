//! Small shared helpers: seeded RNG derivation, ulp arithmetic, atomic writes.

use std::fs;
use std::io;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a 64-bit hash. Used to fold string keys into RNG seed material.
pub fn fnv1a64(data: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in data {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Derive an independent, reproducible RNG stream from a base seed and a
/// string key. Parallel corpus jobs draw one stream per utterance so the
/// schedule cannot affect the output.
pub fn derive_rng(seed: u64, key: &str) -> ChaCha8Rng {
    let h = fnv1a64(key.as_bytes());
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&h.to_le_bytes());
    bytes[16..24].copy_from_slice(&(h ^ 0x9e37_79b9_7f4a_7c15).rotate_left(17).to_le_bytes());
    bytes[24..32].copy_from_slice(&seed.wrapping_mul(0xd134_2543_de82_ef95).to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Distance in units-in-the-last-place at the magnitude of `scale`.
pub fn ulp_at(scale: f64) -> f64 {
    let s = scale.abs().max(f64::MIN_POSITIVE);
    let next = f64::from_bits(s.to_bits() + 1);
    next - s
}

/// `|a - b|` measured in ulps of the largest magnitude among `a`, `b`, `mag`.
pub fn ulp_diff(a: f64, b: f64, mag: f64) -> f64 {
    let scale = a.abs().max(b.abs()).max(mag.abs()).max(f64::MIN_POSITIVE);
    (a - b).abs() / ulp_at(scale)
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Write `bytes` to `path` atomically: a unique temp file in the same
/// directory is renamed over the target, so readers never observe a
/// partially written file and a failed run leaves prior outputs intact.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(format!(".{}-{}.tmp.", std::process::id(), n));
    tmp_name.push(file_name);
    let tmp = match dir {
        Some(d) => d.join(&tmp_name),
        None => Path::new(&tmp_name).to_path_buf(),
    };
    fs::write(&tmp, bytes)?;
    match fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// Mean of a non-empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}
