//! Vector-quantized bottleneck: nearest-codeword quantization, EMA codebook
//! maintenance, commitment loss, reconstruction NLL, and the
//! straight-through gradient contract.
//!
//! No autodiff is assumed: the backward contract of the quantizer is exposed
//! as explicit gradient-composition functions, and every gradient here is
//! checkable against finite differences with frozen codeword assignments.

mod encoder;

pub use encoder::{Activation, BatchNorm1d, Conv1dBlock, ToyEncoder};

use ndarray::{Array1, Array2};
use rand::Rng;
use thiserror::Error;

use crate::audio::MuLawCode;
use crate::util::atomic_write;

/// Commitment weight in the total objective.
pub const DEFAULT_BETA: f64 = 0.25;
/// EMA decay for codebook statistics.
pub const DEFAULT_DECAY: f64 = 0.99;
/// Laplace smoothing constant for EMA counts.
pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum VqError {
    #[error("latent width {got} does not match codebook width {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{got} assignment indices for {expected} latent rows")]
    IndexCountMismatch { expected: usize, got: usize },
    #[error("assignment index {index} out of range for {codewords} codewords")]
    IndexOutOfRange { index: usize, codewords: usize },
    #[error("logits rows {logits} do not match {targets} target codes")]
    LengthMismatch { logits: usize, targets: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad codebook file {path}: {reason}")]
    BadFile { path: String, reason: String },
}

/// Trainable codebook plus the EMA statistics that maintain it. After every
/// update, `vectors[i] == ema_sums[i] / laplace(ema_counts)[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    vectors: Array2<f64>,
    ema_counts: Array1<f64>,
    ema_sums: Array2<f64>,
    decay: f64,
    epsilon: f64,
}

impl Codebook {
    /// Initialize from explicit codewords; EMA counts start at one so the
    /// sums/counts invariant holds from the first step.
    pub fn new(vectors: Array2<f64>, decay: f64, epsilon: f64) -> Self {
        let k = vectors.nrows();
        let ema_sums = vectors.clone();
        Self { vectors, ema_counts: Array1::ones(k), ema_sums, decay, epsilon }
    }

    /// Uniform random codewords in [-1, 1], reproducible from the seed.
    pub fn random(codewords: usize, width: usize, seed: u64) -> Self {
        let mut rng = crate::util::derive_rng(seed, "codebook-init");
        let vectors = Array2::from_shape_fn((codewords, width), |_| rng.gen_range(-1.0..1.0));
        Self::new(vectors, DEFAULT_DECAY, DEFAULT_EPSILON)
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn ema_counts(&self) -> &Array1<f64> {
        &self.ema_counts
    }

    pub fn ema_sums(&self) -> &Array2<f64> {
        &self.ema_sums
    }

    pub fn codewords(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn width(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Reorder codewords (test/introspection hook); EMA state moves with
    /// them so updates commute with relabeling.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, VqError> {
        if perm.len() != self.codewords() {
            return Err(VqError::ShapeMismatch("permutation length".into()));
        }
        let mut vectors = Array2::zeros(self.vectors.raw_dim());
        let mut sums = Array2::zeros(self.ema_sums.raw_dim());
        let mut counts = Array1::zeros(self.ema_counts.raw_dim());
        for (new, &old) in perm.iter().enumerate() {
            if old >= self.codewords() {
                return Err(VqError::IndexOutOfRange { index: old, codewords: self.codewords() });
            }
            vectors.row_mut(new).assign(&self.vectors.row(old));
            sums.row_mut(new).assign(&self.ema_sums.row(old));
            counts[new] = self.ema_counts[old];
        }
        Ok(Self {
            vectors,
            ema_counts: counts,
            ema_sums: sums,
            decay: self.decay,
            epsilon: self.epsilon,
        })
    }
}

/// Encoder outputs, their assigned codeword indices, and the quantized rows
/// (exact copies of the assigned codewords).
#[derive(Debug, Clone)]
pub struct LatentSequence {
    pub z: Array2<f64>,
    pub indices: Vec<usize>,
    pub quantized: Array2<f64>,
}

/// Map every latent row to its nearest codeword by squared Euclidean
/// distance; ties break toward the lowest index.
pub fn quantize(cb: &Codebook, z: &Array2<f64>) -> Result<LatentSequence, VqError> {
    if z.ncols() != cb.width() {
        return Err(VqError::DimensionMismatch { expected: cb.width(), got: z.ncols() });
    }
    let mut indices = Vec::with_capacity(z.nrows());
    let mut quantized = Array2::zeros(z.raw_dim());
    for (j, row) in z.rows().into_iter().enumerate() {
        let mut best = f64::INFINITY;
        let mut best_i = 0usize;
        for (i, code) in cb.vectors.rows().into_iter().enumerate() {
            let mut d = 0.0;
            for (a, b) in row.iter().zip(code) {
                let t = a - b;
                d += t * t;
            }
            if d < best {
                best = d;
                best_i = i;
            }
        }
        indices.push(best_i);
        quantized.row_mut(j).assign(&cb.vectors.row(best_i));
    }
    Ok(LatentSequence { z: z.clone(), indices, quantized })
}

fn check_same_shape(z: &Array2<f64>, zq: &Array2<f64>) -> Result<(), VqError> {
    if z.raw_dim() != zq.raw_dim() {
        return Err(VqError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            z.raw_dim(),
            zq.raw_dim()
        )));
    }
    Ok(())
}

/// Mean squared distance between latents and their (stop-gradient) assigned
/// codewords: `(1/N) * sum_j ||z_j - sg(zq_j)||^2`.
pub fn commitment_loss(z: &Array2<f64>, zq: &Array2<f64>) -> Result<f64, VqError> {
    check_same_shape(z, zq)?;
    let n = z.nrows().max(1) as f64;
    let total: f64 = z.iter().zip(zq.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(total / n)
}

/// Gradient of [`commitment_loss`] with respect to `z`: `2 (z - zq) / N`.
/// The quantized side carries no gradient.
pub fn commitment_grad(z: &Array2<f64>, zq: &Array2<f64>) -> Result<Array2<f64>, VqError> {
    check_same_shape(z, zq)?;
    let n = z.nrows().max(1) as f64;
    Ok((z - zq).mapv(|d| 2.0 * d / n))
}

/// Forward side of the straight-through estimator: the quantized values
/// flow onward unchanged.
pub fn straight_through_forward(
    z: &Array2<f64>,
    zq: &Array2<f64>,
) -> Result<Array2<f64>, VqError> {
    check_same_shape(z, zq)?;
    Ok(zq.clone())
}

/// Backward side: the downstream gradient passes through to `z` untouched.
pub fn straight_through_backward(downstream_grad: &Array2<f64>) -> Array2<f64> {
    downstream_grad.clone()
}

/// Gradient of the total surrogate objective with respect to `z`: the
/// straight-through pass of the downstream gradient plus the commitment
/// term `beta * 2 (z - zq) / N`.
pub fn surrogate_gradient(
    z: &Array2<f64>,
    zq: &Array2<f64>,
    downstream_grad: &Array2<f64>,
    beta: f64,
) -> Result<Array2<f64>, VqError> {
    check_same_shape(z, zq)?;
    check_same_shape(z, downstream_grad)?;
    let commit = commitment_grad(z, zq)?;
    Ok(downstream_grad + &commit.mapv(|g| beta * g))
}

/// One EMA maintenance step from a batch of latents and their assignments:
/// decayed counts and sums per codeword, then codewords re-derived as
/// `sums / laplace-smoothed counts`.
pub fn ema_update(cb: &mut Codebook, z: &Array2<f64>, indices: &[usize]) -> Result<(), VqError> {
    if z.ncols() != cb.width() {
        return Err(VqError::DimensionMismatch { expected: cb.width(), got: z.ncols() });
    }
    if indices.len() != z.nrows() {
        return Err(VqError::IndexCountMismatch { expected: z.nrows(), got: indices.len() });
    }
    let k = cb.codewords();
    let mut batch_counts = vec![0.0f64; k];
    let mut batch_sums = Array2::<f64>::zeros((k, cb.width()));
    for (j, &i) in indices.iter().enumerate() {
        if i >= k {
            return Err(VqError::IndexOutOfRange { index: i, codewords: k });
        }
        batch_counts[i] += 1.0;
        let mut row = batch_sums.row_mut(i);
        row += &z.row(j);
    }

    let g = cb.decay;
    for (count, fresh) in cb.ema_counts.iter_mut().zip(&batch_counts) {
        *count = g * *count + (1.0 - g) * fresh;
    }
    for (mut sums, fresh) in cb.ema_sums.rows_mut().into_iter().zip(batch_sums.rows()) {
        let updated = sums.mapv(|s| g * s) + fresh.mapv(|s| (1.0 - g) * s);
        sums.assign(&updated);
    }
    let total: f64 = cb.ema_counts.sum();
    for i in 0..k {
        let smoothed = (cb.ema_counts[i] + cb.epsilon) / (total + k as f64 * cb.epsilon) * total;
        let row = cb.ema_sums.row(i).mapv(|s| s / smoothed);
        cb.vectors.row_mut(i).assign(&row);
    }
    Ok(())
}

/// Total objective: reconstruction NLL plus `beta` times the commitment
/// loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VqLoss {
    pub reconstruction_nll: f64,
    pub commitment: f64,
    pub beta: f64,
    pub total: f64,
}

impl VqLoss {
    pub fn new(reconstruction_nll: f64, commitment: f64, beta: f64) -> Self {
        Self { reconstruction_nll, commitment, beta, total: reconstruction_nll + beta * commitment }
    }
}

/// Mean categorical cross-entropy of mu-law targets under per-step logits
/// over the 256 classes, stabilized with log-sum-exp.
pub fn reconstruction_nll(logits: &Array2<f64>, targets: &MuLawCode) -> Result<f64, VqError> {
    if logits.ncols() != 256 {
        return Err(VqError::ShapeMismatch(format!(
            "logits must have 256 classes, got {}",
            logits.ncols()
        )));
    }
    if logits.nrows() != targets.len() {
        return Err(VqError::LengthMismatch { logits: logits.nrows(), targets: targets.len() });
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(VqError::NonFinite("logits"));
    }
    let mut total = 0.0;
    for (row, &code) in logits.rows().into_iter().zip(targets.codes()) {
        let max = row.iter().cloned().fold(f64::MIN, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[code as usize];
    }
    Ok(total / targets.len().max(1) as f64)
}

const CODEBOOK_MAGIC: &[u8; 8] = b"N2NVQCB\0";

impl Codebook {
    /// Flat binary serialization: magic, dims, decay, epsilon, then counts,
    /// sums, and vectors as little-endian f32.
    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<(), VqError> {
        let path = path.as_ref();
        let k = self.codewords();
        let d = self.width();
        let mut out = Vec::with_capacity(24 + 4 * (k + 2 * k * d));
        out.extend_from_slice(CODEBOOK_MAGIC);
        out.extend_from_slice(&(k as u32).to_le_bytes());
        out.extend_from_slice(&(d as u32).to_le_bytes());
        out.extend_from_slice(&(self.decay as f32).to_le_bytes());
        out.extend_from_slice(&(self.epsilon as f32).to_le_bytes());
        for &c in self.ema_counts.iter() {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        for &s in self.ema_sums.iter() {
            out.extend_from_slice(&(s as f32).to_le_bytes());
        }
        for &v in self.vectors.iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        atomic_write(path, &out)
            .map_err(|e| VqError::Io { path: path.display().to_string(), source: e })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, VqError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| VqError::Io { path: path.display().to_string(), source: e })?;
        let bad = |reason: &str| VqError::BadFile {
            path: path.display().to_string(),
            reason: reason.to_string(),
        };
        if bytes.len() < 24 || &bytes[0..8] != CODEBOOK_MAGIC {
            return Err(bad("missing magic"));
        }
        let k = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let decay = f64::from(f32::from_le_bytes(bytes[16..20].try_into().unwrap()));
        let epsilon = f64::from(f32::from_le_bytes(bytes[20..24].try_into().unwrap()));
        let want = 24 + 4 * (k + 2 * k * d);
        if bytes.len() != want {
            return Err(bad("payload size does not match dims"));
        }
        let mut f = bytes[24..]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
        let ema_counts = Array1::from_iter((&mut f).take(k));
        let ema_sums = Array2::from_shape_vec((k, d), (&mut f).take(k * d).collect())
            .map_err(|_| bad("sums shape"))?;
        let vectors = Array2::from_shape_vec((k, d), f.collect())
            .map_err(|_| bad("vectors shape"))?;
        Ok(Self { vectors, ema_counts, ema_sums, decay, epsilon })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn small_codebook() -> Codebook {
        Codebook::new(
            array![[0.0, 0.0, 0.0], [1.0, 1.0, 1.0], [-1.0, 0.5, 0.0]],
            DEFAULT_DECAY,
            DEFAULT_EPSILON,
        )
    }

    #[test]
    fn quantize_picks_nearest_by_inspection() {
        let cb = small_codebook();
        let z = array![[0.2, 0.2, 0.2]];
        let q = quantize(&cb, &z).unwrap();
        assert_eq!(q.indices, vec![0]);
        assert_eq!(q.quantized.row(0).to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn exact_codeword_maps_to_itself() {
        let cb = Codebook::random(16, 8, 7);
        let z = cb.vectors().row(7).insert_axis(ndarray::Axis(0)).to_owned();
        let q = quantize(&cb, &z).unwrap();
        assert_eq!(q.indices, vec![7]);
        assert_eq!(q.quantized.row(0), cb.vectors().row(7));
    }

    #[test]
    fn quantize_matches_exhaustive_oracle_and_is_idempotent() {
        let cb = Codebook::random(64, 16, 3);
        let mut rng = crate::util::derive_rng(5, "vq-oracle");
        let z = Array2::from_shape_fn((40, 16), |_| rng.gen_range(-2.0..2.0));
        let q = quantize(&cb, &z).unwrap();
        // oracle computes distances through the expanded form
        for (j, row) in z.rows().into_iter().enumerate() {
            let z_sq: f64 = row.iter().map(|v| v * v).sum();
            let mut best = (0usize, f64::INFINITY);
            for (i, code) in cb.vectors().rows().into_iter().enumerate() {
                let e_sq: f64 = code.iter().map(|v| v * v).sum();
                let cross: f64 = row.iter().zip(code).map(|(a, b)| a * b).sum();
                let d = z_sq - 2.0 * cross + e_sq;
                if d < best.1 {
                    best = (i, d);
                }
            }
            assert_eq!(q.indices[j], best.0, "row {j}");
            // argmin property
            let d_best: f64 = row
                .iter()
                .zip(q.quantized.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            for code in cb.vectors().rows() {
                let d: f64 = row.iter().zip(code).map(|(a, b)| (a - b) * (a - b)).sum();
                assert!(d_best <= d + 1e-12);
            }
        }
        let q2 = quantize(&cb, &q.quantized).unwrap();
        assert_eq!(q2.indices, q.indices);
    }

    #[test]
    fn ties_break_toward_lowest_index() {
        let cb = Codebook::new(
            array![[1.0, 0.0], [1.0, 0.0], [-1.0, 0.0]],
            DEFAULT_DECAY,
            DEFAULT_EPSILON,
        );
        // equidistant between codewords 0/1 (identical) and far from 2
        let q = quantize(&cb, &array![[0.9, 0.1], [0.0, 0.0]]).unwrap();
        assert_eq!(q.indices[0], 0);
        // (0,0) is equidistant from (1,0) and (-1,0): lowest index wins
        assert_eq!(q.indices[1], 0);
    }

    #[test]
    fn commitment_loss_values_and_gradient() {
        let z = array![[1.0, 0.0], [0.0, 1.0]];
        assert_eq!(commitment_loss(&z, &z).unwrap(), 0.0);

        let z = array![[0.6, 0.8]]; // unit distance from origin
        let zq = array![[0.0, 0.0]];
        assert!((commitment_loss(&z, &zq).unwrap() - 1.0).abs() < 1e-15);

        // finite differences
        let mut rng = crate::util::derive_rng(6, "commit-fd");
        let z = Array2::from_shape_fn((5, 4), |_| rng.gen_range(-1.0..1.0));
        let zq = Array2::from_shape_fn((5, 4), |_| rng.gen_range(-1.0..1.0));
        let grad = commitment_grad(&z, &zq).unwrap();
        let h = 1e-6;
        for idx in [(0, 0), (2, 3), (4, 1)] {
            let mut zp = z.clone();
            zp[idx] += h;
            let mut zm = z.clone();
            zm[idx] -= h;
            let fd = (commitment_loss(&zp, &zq).unwrap() - commitment_loss(&zm, &zq).unwrap())
                / (2.0 * h);
            let g = grad[idx];
            assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0), "fd {fd} vs {g}");
        }
    }

    #[test]
    fn straight_through_contract() {
        let z = array![[0.3, -0.2], [0.9, 0.4]];
        let cb = Codebook::new(array![[0.0, 0.0], [1.0, 0.5]], DEFAULT_DECAY, DEFAULT_EPSILON);
        let q = quantize(&cb, &z).unwrap();
        let fwd = straight_through_forward(&z, &q.quantized).unwrap();
        assert_eq!(fwd, q.quantized);

        // downstream loss ||out||^2 / 2 has gradient `out`, i.e. zq
        let downstream = fwd.clone();
        let back = straight_through_backward(&downstream);
        assert_eq!(back, q.quantized);

        // arbitrary downstream gradient passes through exactly
        let g = array![[5.0, -1.0], [0.25, 2.0]];
        assert_eq!(straight_through_backward(&g), g);
    }

    #[test]
    fn surrogate_gradient_matches_frozen_assignment_finite_differences() {
        // composed computation with indices frozen at the base point:
        //   out(z) = z + (zq0 - z0)        (straight-through offset)
        //   L(z) = 0.5 * ||out(z)||^2 + beta * (1/N) * ||z - zq0||^2
        let mut rng = crate::util::derive_rng(8, "ste-fd");
        let cb = Codebook::random(12, 6, 2);
        let z0 = Array2::from_shape_fn((7, 6), |_| rng.gen_range(-1.5..1.5));
        let q = quantize(&cb, &z0).unwrap();
        let offset = &q.quantized - &z0;
        let beta = DEFAULT_BETA;

        let loss = |z: &Array2<f64>| -> f64 {
            let out = z + &offset;
            let downstream: f64 = 0.5 * out.iter().map(|v| v * v).sum::<f64>();
            let commit: f64 = z
                .iter()
                .zip(q.quantized.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / z.nrows() as f64;
            downstream + beta * commit
        };

        // downstream gradient at z0 is out(z0) = zq0
        let grad = surrogate_gradient(&z0, &q.quantized, &q.quantized, beta).unwrap();
        let h = 1e-6;
        for idx in [(0, 0), (3, 5), (6, 2)] {
            let mut zp = z0.clone();
            zp[idx] += h;
            let mut zm = z0.clone();
            zm[idx] -= h;
            let fd = (loss(&zp) - loss(&zm)) / (2.0 * h);
            assert!(
                (fd - grad[idx]).abs() <= 1e-6 * grad[idx].abs().max(1.0),
                "fd {fd} vs {}",
                grad[idx]
            );
        }
    }

    #[test]
    fn ema_converges_to_a_constant_batch() {
        let mut cb = Codebook::new(
            Array2::from_shape_fn((2, 4), |(i, j)| if i == 0 { 0.1 * j as f64 } else { 5.0 }),
            DEFAULT_DECAY,
            DEFAULT_EPSILON,
        );
        let p = array![[2.0, -1.0, 0.5, 3.0]];
        let q0 = quantize(&cb, &p).unwrap();
        let assigned = q0.indices[0];
        let d0: f64 = cb
            .vectors()
            .row(assigned)
            .iter()
            .zip(p.row(0))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();

        // geometric series: after t steps the residual is about decay^t * d0,
        // so t = ceil(log(tol/d0) / log(decay)) steps suffice for tol = 1e-3
        let tol = 1e-3;
        let steps = ((tol / d0).ln() / DEFAULT_DECAY.ln()).ceil() as usize;
        for _ in 0..steps {
            let q = quantize(&cb, &p).unwrap();
            assert_eq!(q.indices[0], assigned);
            ema_update(&mut cb, &p, &q.indices).unwrap();
        }
        let err: f64 = cb
            .vectors()
            .row(assigned)
            .iter()
            .zip(p.row(0))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err < tol, "err {err} after {steps} steps");
        // and the residual tracks the geometric prediction (smoothing adds
        // a small perturbation on top)
        let predicted = DEFAULT_DECAY.powi(steps as i32) * d0;
        assert!(err <= predicted * 1.5 + 1e-6, "err {err} vs predicted {predicted}");
    }

    #[test]
    fn ema_pulls_codewords_to_cluster_means() {
        let mut rng = crate::util::derive_rng(17, "ema-clusters");
        let mean_a = [2.0, 2.0, -1.0];
        let mean_b = [-2.0, 1.0, 3.0];
        let mut rows = Vec::new();
        for i in 0..40 {
            let m = if i % 2 == 0 { &mean_a } else { &mean_b };
            rows.push([
                m[0] + rng.gen_range(-0.05..0.05),
                m[1] + rng.gen_range(-0.05..0.05),
                m[2] + rng.gen_range(-0.05..0.05),
            ]);
        }
        let z = Array2::from_shape_fn((40, 3), |(i, j)| rows[i][j]);
        let mut cb = Codebook::new(array![[1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]], 0.9, DEFAULT_EPSILON);
        for _ in 0..200 {
            let q = quantize(&cb, &z).unwrap();
            ema_update(&mut cb, &z, &q.indices).unwrap();
        }
        // empirical cluster means
        let q = quantize(&cb, &z).unwrap();
        for i in 0..2 {
            let members: Vec<usize> =
                (0..40).filter(|&j| q.indices[j] == i).collect();
            assert!(!members.is_empty());
            for d in 0..3 {
                let mean: f64 =
                    members.iter().map(|&j| z[(j, d)]).sum::<f64>() / members.len() as f64;
                assert!(
                    (cb.vectors()[(i, d)] - mean).abs() < 1e-3,
                    "codeword {i} dim {d}: {} vs {mean}",
                    cb.vectors()[(i, d)]
                );
            }
        }
    }

    #[test]
    fn unassigned_codewords_barely_move() {
        let mut cb = small_codebook();
        let far = cb.vectors().row(2).to_owned();
        let z = array![[0.05, 0.0, 0.0]]; // assigned to codeword 0
        let q = quantize(&cb, &z).unwrap();
        assert_eq!(q.indices, vec![0]);
        ema_update(&mut cb, &z, &q.indices).unwrap();
        for (a, b) in cb.vectors().row(2).iter().zip(far.iter()) {
            assert!((a - b).abs() < 1e-2, "{a} vs {b}");
        }
    }

    #[test]
    fn vectors_track_smoothed_sums_after_every_update() {
        let mut rng = crate::util::derive_rng(29, "ema-invariant");
        let mut cb = Codebook::random(8, 5, 55);
        for step in 0..25 {
            let z = Array2::from_shape_fn((12, 5), |_| rng.gen_range(-2.0..2.0));
            let q = quantize(&cb, &z).unwrap();
            ema_update(&mut cb, &z, &q.indices).unwrap();

            let total: f64 = cb.ema_counts().sum();
            let k = cb.codewords() as f64;
            for i in 0..cb.codewords() {
                let smoothed =
                    (cb.ema_counts()[i] + cb.epsilon()) / (total + k * cb.epsilon()) * total;
                for d in 0..cb.width() {
                    let want = cb.ema_sums()[(i, d)] / smoothed;
                    assert_eq!(cb.vectors()[(i, d)], want, "step {step} codeword {i}");
                }
            }
        }
    }

    #[test]
    fn ema_commutes_with_codebook_permutation() {
        let mut rng = crate::util::derive_rng(23, "ema-perm");
        let z = Array2::from_shape_fn((10, 4), |_| rng.gen_range(-1.0..1.0));
        let cb = Codebook::random(6, 4, 77);
        let perm = [3usize, 0, 5, 1, 4, 2];

        let mut direct = cb.clone();
        let q = quantize(&direct, &z).unwrap();
        ema_update(&mut direct, &z, &q.indices).unwrap();
        let direct_permuted = direct.permuted(&perm).unwrap();

        let mut permuted_first = cb.permuted(&perm).unwrap();
        // relabel: old index i now lives at perm^-1(i)
        let mut inverse = vec![0usize; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let relabeled: Vec<usize> = q.indices.iter().map(|&i| inverse[i]).collect();
        ema_update(&mut permuted_first, &z, &relabeled).unwrap();

        assert_eq!(direct_permuted, permuted_first);
    }

    #[test]
    fn nll_certainty_uniform_and_oracle() {
        let targets = MuLawCode::new(vec![0, 100, 255], 8000);

        // near-one-hot logits with gap 40
        let mut logits = Array2::from_elem((3, 256), 0.0);
        for (t, &c) in targets.codes().iter().enumerate() {
            logits[(t, c as usize)] = 40.0;
        }
        let v = reconstruction_nll(&logits, &targets).unwrap();
        assert!((0.0..=1e-6).contains(&v), "{v}");

        let uniform = Array2::from_elem((3, 256), 1.7);
        let v = reconstruction_nll(&uniform, &targets).unwrap();
        assert!((v - 256f64.ln()).abs() < 1e-9);

        // naive softmax oracle on random logits
        let mut rng = crate::util::derive_rng(31, "nll-oracle");
        let logits = Array2::from_shape_fn((16, 256), |_| rng.gen_range(-5.0..5.0));
        let targets = MuLawCode::new((0..16).map(|i| (i * 13 % 256) as u8).collect(), 8000);
        let got = reconstruction_nll(&logits, &targets).unwrap();
        let mut want = 0.0;
        for (row, &c) in logits.rows().into_iter().zip(targets.codes()) {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            let p = row[c as usize].exp() / z;
            want -= p.ln();
        }
        want /= 16.0;
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn perfect_reconstruction_with_committed_latents_has_zero_total() {
        let z = array![[0.5, -0.5]];
        let loss = VqLoss::new(0.0, commitment_loss(&z, &z).unwrap(), DEFAULT_BETA);
        assert_eq!(loss.total, 0.0);
        let loss = VqLoss::new(1.5, 0.8, 0.25);
        assert!((loss.total - (1.5 + 0.25 * 0.8)).abs() < 1e-15);
    }

    #[test]
    fn codebook_serialization_round_trips() {
        let dir = std::env::temp_dir().join(format!("n2nvc-vq-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("cb.bin");
        let cb = Codebook::random(32, 8, 123);
        cb.save(&p).unwrap();
        let loaded = Codebook::load(&p).unwrap();
        assert_eq!(loaded.codewords(), 32);
        assert_eq!(loaded.width(), 8);
        for (a, b) in cb.vectors().iter().zip(loaded.vectors().iter()) {
            assert!((a - b).abs() <= a.abs().max(1.0) * 1e-6);
        }
        assert!(matches!(
            Codebook::load(dir.join("nope.bin")),
            Err(VqError::Io { .. })
        ));
        std::fs::write(dir.join("junk.bin"), b"garbage").unwrap();
        assert!(matches!(
            Codebook::load(dir.join("junk.bin")),
            Err(VqError::BadFile { .. })
        ));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn dimension_errors_are_reported() {
        let cb = small_codebook();
        let wrong = Array2::<f64>::zeros((2, 5));
        assert!(matches!(
            quantize(&cb, &wrong),
            Err(VqError::DimensionMismatch { expected: 3, got: 5 })
        ));
        let z = Array2::<f64>::zeros((2, 3));
        let mut cb2 = small_codebook();
        assert!(matches!(
            ema_update(&mut cb2, &z, &[0]),
            Err(VqError::IndexCountMismatch { .. })
        ));
        assert!(matches!(
            ema_update(&mut cb2, &z, &[0, 9]),
            Err(VqError::IndexOutOfRange { .. })
        ));
    }
}
