//! Toy convolutional encoder: five Conv1D blocks over log-mel frames, one of
//! them stride-2, producing 64-wide latent rows at half the frame rate.
//!
//! This is a deterministic forward pass for shape- and algebra-level checks,
//! not a trained model: batch norm runs in inference mode with caller-fixed
//! statistics, and an optional 64-wide conditioning vector (standing in for
//! a speaker embedding) can be concatenated onto every input frame.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;

use super::VqError;
use crate::spectral::MelSpectrogram;

/// Latent width produced by the stock encoder.
pub const LATENT_WIDTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    ReLU,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::ReLU => v.max(0.0),
            Activation::Identity => v,
        }
    }
}

/// Inference-mode 1-D batch norm statistics per output channel.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub mean: Array1<f64>,
    pub var: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub epsilon: f64,
}

impl BatchNorm1d {
    /// Unit statistics: normalization is the identity.
    pub fn unit(channels: usize) -> Self {
        Self {
            mean: Array1::zeros(channels),
            var: Array1::ones(channels),
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            epsilon: 0.0,
        }
    }
}

/// One convolution block: Conv1D (same padding) + optional batch norm +
/// activation.
#[derive(Debug, Clone)]
pub struct Conv1dBlock {
    /// Kernel, shape (out_channels, in_channels, kernel_len); kernel_len odd.
    pub weight: Array3<f64>,
    pub bias: Array1<f64>,
    pub stride: usize,
    pub norm: Option<BatchNorm1d>,
    pub activation: Activation,
}

impl Conv1dBlock {
    fn out_channels(&self) -> usize {
        self.weight.dim().0
    }

    fn in_channels(&self) -> usize {
        self.weight.dim().1
    }

    /// Same-padded strided convolution over the time axis.
    /// Input (frames, in_channels) -> output (ceil(frames/stride), out_channels).
    fn forward(&self, x: &Array2<f64>, block_idx: usize) -> Result<Array2<f64>, VqError> {
        if x.ncols() != self.in_channels() {
            return Err(VqError::ShapeMismatch(format!(
                "block {block_idx}: input has {} channels, kernel expects {}",
                x.ncols(),
                self.in_channels()
            )));
        }
        if self.bias.len() != self.out_channels() {
            return Err(VqError::ShapeMismatch(format!(
                "block {block_idx}: bias length {} vs {} output channels",
                self.bias.len(),
                self.out_channels()
            )));
        }
        let k = self.weight.dim().2;
        if k % 2 == 0 || self.stride == 0 {
            return Err(VqError::ShapeMismatch(format!(
                "block {block_idx}: kernel length must be odd and stride nonzero"
            )));
        }
        let pad = (k - 1) / 2;
        let t_in = x.nrows();
        let t_out = t_in.div_ceil(self.stride);
        let mut y = Array2::zeros((t_out, self.out_channels()));
        for t in 0..t_out {
            let center = t * self.stride;
            for o in 0..self.out_channels() {
                let mut acc = self.bias[o];
                for dk in 0..k {
                    let src = center as isize + dk as isize - pad as isize;
                    if src < 0 || src >= t_in as isize {
                        continue;
                    }
                    for c in 0..self.in_channels() {
                        acc += self.weight[(o, c, dk)] * x[(src as usize, c)];
                    }
                }
                y[(t, o)] = acc;
            }
        }
        if let Some(norm) = &self.norm {
            if norm.mean.len() != self.out_channels() {
                return Err(VqError::ShapeMismatch(format!(
                    "block {block_idx}: batch-norm width {} vs {} output channels",
                    norm.mean.len(),
                    self.out_channels()
                )));
            }
            for o in 0..self.out_channels() {
                let denom = (norm.var[o] + norm.epsilon).sqrt();
                for t in 0..t_out {
                    y[(t, o)] = (y[(t, o)] - norm.mean[o]) / denom * norm.gamma[o] + norm.beta[o];
                }
            }
        }
        y.mapv_inplace(|v| self.activation.apply(v));
        Ok(y)
    }
}

/// Five-block encoder over log-mel frames.
#[derive(Debug, Clone)]
pub struct ToyEncoder {
    pub blocks: Vec<Conv1dBlock>,
    pub conditioning_dim: usize,
}

impl ToyEncoder {
    /// Stock layout: kernel-3 blocks at widths `n_mels(+cond) -> 64 -> 64 ->
    /// 64 -> 64 -> 64`, the second block stride-2 (halving the frame rate),
    /// unit batch norm, ReLU, and small seeded weights.
    pub fn seeded(n_mels: usize, conditioning_dim: usize, seed: u64) -> Self {
        let mut rng = crate::util::derive_rng(seed, "toy-encoder");
        let widths = [n_mels + conditioning_dim, 64, 64, 64, 64, LATENT_WIDTH];
        let strides = [1usize, 2, 1, 1, 1];
        let blocks = (0..5)
            .map(|b| {
                let (cin, cout) = (widths[b], widths[b + 1]);
                let scale = (2.0 / (cin as f64 * 3.0)).sqrt();
                Conv1dBlock {
                    weight: Array3::from_shape_fn((cout, cin, 3), |_| {
                        rng.gen_range(-scale..scale)
                    }),
                    bias: Array1::zeros(cout),
                    stride: strides[b],
                    norm: Some(BatchNorm1d::unit(cout)),
                    activation: if b == 4 { Activation::Identity } else { Activation::ReLU },
                }
            })
            .collect();
        Self { blocks, conditioning_dim }
    }

    /// Forward over raw feature rows (frames, features).
    pub fn forward_features(
        &self,
        features: &Array2<f64>,
        conditioning: Option<&Array1<f64>>,
    ) -> Result<Array2<f64>, VqError> {
        let cond_len = conditioning.map_or(0, Array1::len);
        if cond_len != self.conditioning_dim {
            return Err(VqError::ShapeMismatch(format!(
                "conditioning width {cond_len} vs expected {}",
                self.conditioning_dim
            )));
        }
        let mut x = if let Some(cond) = conditioning {
            let mut with_cond = Array2::zeros((features.nrows(), features.ncols() + cond.len()));
            for t in 0..features.nrows() {
                for c in 0..features.ncols() {
                    with_cond[(t, c)] = features[(t, c)];
                }
                for (c, &v) in cond.iter().enumerate() {
                    with_cond[(t, features.ncols() + c)] = v;
                }
            }
            with_cond
        } else {
            features.clone()
        };
        for (i, block) in self.blocks.iter().enumerate() {
            x = block.forward(&x, i)?;
        }
        Ok(x)
    }

    /// Forward over a log-mel spectrogram.
    pub fn forward(
        &self,
        mel: &MelSpectrogram,
        conditioning: Option<&Array1<f64>>,
    ) -> Result<Array2<f64>, VqError> {
        self.forward_features(&mel.frames, conditioning)
    }
}
