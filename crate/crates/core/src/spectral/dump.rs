//! Debug dumps of spectrogram matrices as flat little-endian f32 binaries.
//!
//! Layout: 16-byte header (8-byte magic, u32 rows, u32 cols) followed by
//! row-major f32 payload; complex matrices interleave re,im per entry.

use std::path::Path;

use ndarray::Array2;
use realfft::num_complex::Complex64;

use super::SpectralError;
use crate::util::atomic_write;

const MAGIC_REAL: &[u8; 8] = b"N2NMAT\0\0";
const MAGIC_COMPLEX: &[u8; 8] = b"N2NCPX\0\0";

fn io_err(path: &Path, source: std::io::Error) -> SpectralError {
    SpectralError::Io { path: path.display().to_string(), source }
}

fn write_header(out: &mut Vec<u8>, magic: &[u8; 8], rows: usize, cols: usize) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
}

pub fn dump_real_matrix(path: impl AsRef<Path>, m: &Array2<f64>) -> Result<(), SpectralError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(16 + m.len() * 4);
    write_header(&mut out, MAGIC_REAL, m.nrows(), m.ncols());
    for &v in m.iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    atomic_write(path, &out).map_err(|e| io_err(path, e))
}

pub fn dump_complex_matrix(
    path: impl AsRef<Path>,
    m: &Array2<Complex64>,
) -> Result<(), SpectralError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(16 + m.len() * 8);
    write_header(&mut out, MAGIC_COMPLEX, m.nrows(), m.ncols());
    for v in m.iter() {
        out.extend_from_slice(&(v.re as f32).to_le_bytes());
        out.extend_from_slice(&(v.im as f32).to_le_bytes());
    }
    atomic_write(path, &out).map_err(|e| io_err(path, e))
}

fn read_header(
    path: &Path,
    bytes: &[u8],
    magic: &[u8; 8],
    values_per_entry: usize,
) -> Result<(usize, usize), SpectralError> {
    let bad = |reason: &str| SpectralError::BadDump {
        path: path.display().to_string(),
        reason: reason.to_string(),
    };
    if bytes.len() < 16 {
        return Err(bad("shorter than header"));
    }
    if &bytes[0..8] != magic {
        return Err(bad("wrong magic"));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if bytes.len() != 16 + rows * cols * 4 * values_per_entry {
        return Err(bad("payload size does not match header"));
    }
    Ok((rows, cols))
}

pub fn load_real_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>, SpectralError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let (rows, cols) = read_header(path, &bytes, MAGIC_REAL, 1)?;
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|_| SpectralError::BadDump {
        path: path.display().to_string(),
        reason: "shape mismatch".into(),
    })
}

pub fn load_complex_matrix(path: impl AsRef<Path>) -> Result<Array2<Complex64>, SpectralError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let (rows, cols) = read_header(path, &bytes, MAGIC_COMPLEX, 2)?;
    let data = bytes[16..]
        .chunks_exact(8)
        .map(|c| {
            let re = f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
            let im = f64::from(f32::from_le_bytes([c[4], c[5], c[6], c[7]]));
            Complex64::new(re, im)
        })
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|_| SpectralError::BadDump {
        path: path.display().to_string(),
        reason: "shape mismatch".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_and_complex_round_trip_at_f32_precision() {
        let dir = std::env::temp_dir().join(format!("n2nvc-dump-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();

        let m = Array2::from_shape_fn((5, 7), |(i, j)| (i as f64 - 2.0) * 0.25 + j as f64);
        let p = dir.join("real.bin");
        dump_real_matrix(&p, &m).unwrap();
        let back = load_real_matrix(&p).unwrap();
        assert_eq!(back.dim(), (5, 7));
        for (a, b) in m.iter().zip(back.iter()) {
            assert!((a - b).abs() <= (a.abs() * 1e-6).max(1e-7));
        }

        let c = Array2::from_shape_fn((3, 4), |(i, j)| {
            Complex64::new(i as f64 * 0.5, -(j as f64) * 0.125)
        });
        let pc = dir.join("cplx.bin");
        dump_complex_matrix(&pc, &c).unwrap();
        let back = load_complex_matrix(&pc).unwrap();
        assert_eq!(back, c);

        assert!(matches!(
            load_real_matrix(&pc),
            Err(SpectralError::BadDump { .. })
        ));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
