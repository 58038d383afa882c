//! Complex-valued network kernels: 2-D convolution, batch normalization,
//! and an LSTM cell, plus a stacked encoder runner.
//!
//! Forward passes only, all deterministic. A complex linear map is realized
//! by the real pair rule `(Wr + i Wi)(xr + i xi) = (Wr xr - Wi xi) +
//! i(Wr xi + Wi xr)`; batch norm whitens the 2x2 covariance of (re, im) per
//! channel; the LSTM applies its nonlinearities and gate products separately
//! to the real and imaginary parts, so purely real inputs and weights stay
//! real.

use ndarray::{Array1, Array2, Array3, Array4};
use thiserror::Error;

use crate::spectral::ComplexSpectrogram;

#[derive(Debug, Error)]
pub enum ComplexNnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("channel {channel} covariance is not positive definite")]
    NonPositiveDefinite { channel: usize },
    #[error("block {block}: {source}")]
    Block {
        block: usize,
        #[source]
        source: Box<ComplexNnError>,
    },
}

/// Complex tensor as paired real tensors, shape (channels, frames, bins).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTensor {
    pub re: Array3<f64>,
    pub im: Array3<f64>,
}

impl ComplexTensor {
    pub fn new(re: Array3<f64>, im: Array3<f64>) -> Result<Self, ComplexNnError> {
        if re.dim() != im.dim() {
            return Err(ComplexNnError::ShapeMismatch(format!(
                "re {:?} vs im {:?}",
                re.dim(),
                im.dim()
            )));
        }
        Ok(Self { re, im })
    }

    pub fn zeros(channels: usize, frames: usize, bins: usize) -> Self {
        Self { re: Array3::zeros((channels, frames, bins)), im: Array3::zeros((channels, frames, bins)) }
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.re.dim()
    }

    /// View a spectrogram as a single-channel tensor (frames, bins).
    pub fn from_spectrogram(s: &ComplexSpectrogram) -> Self {
        let (f, b) = (s.n_frames(), s.n_bins());
        let mut re = Array3::zeros((1, f, b));
        let mut im = Array3::zeros((1, f, b));
        for ((i, j), v) in s.bins.indexed_iter() {
            re[(0, i, j)] = v.re;
            im[(0, i, j)] = v.im;
        }
        Self { re, im }
    }
}

/// Complex 2-D convolution parameters.
#[derive(Debug, Clone)]
pub struct ComplexConvParams {
    /// Real and imaginary kernels, shape (out_ch, in_ch, kh, kw).
    pub w_re: Array4<f64>,
    pub w_im: Array4<f64>,
    pub b_re: Array1<f64>,
    pub b_im: Array1<f64>,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl ComplexConvParams {
    fn check(&self, x: &ComplexTensor) -> Result<(usize, usize, usize), ComplexNnError> {
        let (out_c, in_c, kh, kw) = self.w_re.dim();
        if self.w_im.dim() != (out_c, in_c, kh, kw) {
            return Err(ComplexNnError::ShapeMismatch(format!(
                "imaginary kernel {:?} vs real kernel {:?}",
                self.w_im.dim(),
                self.w_re.dim()
            )));
        }
        if self.b_re.len() != out_c || self.b_im.len() != out_c {
            return Err(ComplexNnError::ShapeMismatch(format!(
                "bias lengths ({}, {}) vs {out_c} output channels",
                self.b_re.len(),
                self.b_im.len()
            )));
        }
        if self.stride.0 == 0 || self.stride.1 == 0 {
            return Err(ComplexNnError::ShapeMismatch("zero stride".into()));
        }
        let (c, h, w) = x.dim();
        if c != in_c {
            return Err(ComplexNnError::ShapeMismatch(format!(
                "input has {c} channels, kernel expects {in_c}"
            )));
        }
        let h_eff = h + 2 * self.padding.0;
        let w_eff = w + 2 * self.padding.1;
        if kh > h_eff || kw > w_eff {
            return Err(ComplexNnError::ShapeMismatch(format!(
                "kernel ({kh}, {kw}) larger than padded input ({h_eff}, {w_eff})"
            )));
        }
        Ok((out_c, (h_eff - kh) / self.stride.0 + 1, (w_eff - kw) / self.stride.1 + 1))
    }
}

/// Complex 2-D convolution via the real pair rule, computed as one fused
/// complex multiply-accumulate per tap.
pub fn complex_conv2d(
    x: &ComplexTensor,
    p: &ComplexConvParams,
) -> Result<ComplexTensor, ComplexNnError> {
    let (out_c, out_h, out_w) = p.check(x)?;
    let (in_c, h, w) = x.dim();
    let (_, _, kh, kw) = p.w_re.dim();
    let (ph, pw) = p.padding;
    let (sh, sw) = p.stride;

    let mut out = ComplexTensor::zeros(out_c, out_h, out_w);
    for o in 0..out_c {
        for oh in 0..out_h {
            for ow in 0..out_w {
                let mut acc_re = p.b_re[o];
                let mut acc_im = p.b_im[o];
                for c in 0..in_c {
                    for dh in 0..kh {
                        let ih = (oh * sh + dh) as isize - ph as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        for dw in 0..kw {
                            let iw = (ow * sw + dw) as isize - pw as isize;
                            if iw < 0 || iw >= w as isize {
                                continue;
                            }
                            let xr = x.re[(c, ih as usize, iw as usize)];
                            let xi = x.im[(c, ih as usize, iw as usize)];
                            let wr = p.w_re[(o, c, dh, dw)];
                            let wi = p.w_im[(o, c, dh, dw)];
                            acc_re += wr * xr - wi * xi;
                            acc_im += wr * xi + wi * xr;
                        }
                    }
                }
                out.re[(o, oh, ow)] = acc_re;
                out.im[(o, oh, ow)] = acc_im;
            }
        }
    }
    Ok(out)
}

/// Inference statistics and affine parameters for complex batch norm, one
/// set per channel: mean of (re, im), their 2x2 covariance, a symmetric 2x2
/// gain, and a complex shift.
#[derive(Debug, Clone)]
pub struct ComplexBatchNormStats {
    pub mean_re: Array1<f64>,
    pub mean_im: Array1<f64>,
    pub cov_rr: Array1<f64>,
    pub cov_ri: Array1<f64>,
    pub cov_ii: Array1<f64>,
    pub gamma_rr: Array1<f64>,
    pub gamma_ri: Array1<f64>,
    pub gamma_ii: Array1<f64>,
    pub beta_re: Array1<f64>,
    pub beta_im: Array1<f64>,
}

impl ComplexBatchNormStats {
    /// Zero mean, identity covariance, identity affine: normalization is the
    /// identity map.
    pub fn identity(channels: usize) -> Self {
        Self {
            mean_re: Array1::zeros(channels),
            mean_im: Array1::zeros(channels),
            cov_rr: Array1::ones(channels),
            cov_ri: Array1::zeros(channels),
            cov_ii: Array1::ones(channels),
            gamma_rr: Array1::ones(channels),
            gamma_ri: Array1::zeros(channels),
            gamma_ii: Array1::ones(channels),
            beta_re: Array1::zeros(channels),
            beta_im: Array1::zeros(channels),
        }
    }

    /// Population statistics of a batch, with identity affine.
    pub fn from_batch(x: &ComplexTensor) -> Self {
        let (c, h, w) = x.dim();
        let n = (h * w) as f64;
        let mut stats = Self::identity(c);
        for ch in 0..c {
            let mut mr = 0.0;
            let mut mi = 0.0;
            for i in 0..h {
                for j in 0..w {
                    mr += x.re[(ch, i, j)];
                    mi += x.im[(ch, i, j)];
                }
            }
            mr /= n;
            mi /= n;
            let (mut vrr, mut vri, mut vii) = (0.0, 0.0, 0.0);
            for i in 0..h {
                for j in 0..w {
                    let dr = x.re[(ch, i, j)] - mr;
                    let di = x.im[(ch, i, j)] - mi;
                    vrr += dr * dr;
                    vri += dr * di;
                    vii += di * di;
                }
            }
            stats.mean_re[ch] = mr;
            stats.mean_im[ch] = mi;
            stats.cov_rr[ch] = vrr / n;
            stats.cov_ri[ch] = vri / n;
            stats.cov_ii[ch] = vii / n;
        }
        stats
    }
}

/// Whiten each channel by the inverse square root of its 2x2 (re, im)
/// covariance, then apply the symmetric complex affine transform.
pub fn complex_batchnorm(
    x: &ComplexTensor,
    stats: &ComplexBatchNormStats,
) -> Result<ComplexTensor, ComplexNnError> {
    let (c, h, w) = x.dim();
    if stats.mean_re.len() != c {
        return Err(ComplexNnError::ShapeMismatch(format!(
            "stats for {} channels, input has {c}",
            stats.mean_re.len()
        )));
    }
    let mut out = ComplexTensor::zeros(c, h, w);
    for ch in 0..c {
        let a = stats.cov_rr[ch];
        let b = stats.cov_ri[ch];
        let d = stats.cov_ii[ch];
        let det = a * d - b * b;
        if !(a > 0.0 && d > 0.0 && det > 0.0) {
            return Err(ComplexNnError::NonPositiveDefinite { channel: ch });
        }
        // closed-form inverse square root of [[a, b], [b, d]]
        let s = det.sqrt();
        let t = (a + d + 2.0 * s).sqrt();
        let w00 = (d + s) / (s * t);
        let w01 = -b / (s * t);
        let w11 = (a + s) / (s * t);

        let (grr, gri, gii) = (stats.gamma_rr[ch], stats.gamma_ri[ch], stats.gamma_ii[ch]);
        for i in 0..h {
            for j in 0..w {
                let dr = x.re[(ch, i, j)] - stats.mean_re[ch];
                let di = x.im[(ch, i, j)] - stats.mean_im[ch];
                let wr = w00 * dr + w01 * di;
                let wi = w01 * dr + w11 * di;
                out.re[(ch, i, j)] = grr * wr + gri * wi + stats.beta_re[ch];
                out.im[(ch, i, j)] = gri * wr + gii * wi + stats.beta_im[ch];
            }
        }
    }
    Ok(out)
}

/// Complex vector as paired real vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVector {
    pub re: Array1<f64>,
    pub im: Array1<f64>,
}

impl ComplexVector {
    pub fn zeros(n: usize) -> Self {
        Self { re: Array1::zeros(n), im: Array1::zeros(n) }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }
}

/// LSTM cell parameters; gate order along the 4H axis is (input, forget,
/// candidate, output).
#[derive(Debug, Clone)]
pub struct ComplexLstmParams {
    pub wx_re: Array2<f64>,
    pub wx_im: Array2<f64>,
    pub wh_re: Array2<f64>,
    pub wh_im: Array2<f64>,
    pub b_re: Array1<f64>,
    pub b_im: Array1<f64>,
}

impl ComplexLstmParams {
    fn hidden(&self) -> usize {
        self.wx_re.nrows() / 4
    }

    fn check(&self, x: &ComplexVector, state: &ComplexLstmState) -> Result<(), ComplexNnError> {
        let four_h = self.wx_re.nrows();
        if four_h == 0 || !four_h.is_multiple_of(4) {
            return Err(ComplexNnError::ShapeMismatch("gate rows not a multiple of 4".into()));
        }
        let h = four_h / 4;
        let input = self.wx_re.ncols();
        let same = self.wx_im.dim() == (four_h, input)
            && self.wh_re.dim() == (four_h, h)
            && self.wh_im.dim() == (four_h, h)
            && self.b_re.len() == four_h
            && self.b_im.len() == four_h;
        if !same {
            return Err(ComplexNnError::ShapeMismatch("inconsistent LSTM parameter shapes".into()));
        }
        if x.len() != input || x.im.len() != input {
            return Err(ComplexNnError::ShapeMismatch(format!(
                "input width {} vs expected {input}",
                x.len()
            )));
        }
        if state.cell.len() != h || state.hidden.len() != h {
            return Err(ComplexNnError::ShapeMismatch(format!(
                "state width {} vs hidden {h}",
                state.cell.len()
            )));
        }
        Ok(())
    }
}

/// Carried LSTM state: complex cell and hidden vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexLstmState {
    pub cell: ComplexVector,
    pub hidden: ComplexVector,
}

impl ComplexLstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self { cell: ComplexVector::zeros(hidden), hidden: ComplexVector::zeros(hidden) }
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// One LSTM step. Gate pre-activations are complex affine maps; sigmoids,
/// tanh, and the gate products act separately on real and imaginary parts,
/// which keeps the real subspace closed.
pub fn complex_lstm_cell(
    x: &ComplexVector,
    state: &ComplexLstmState,
    p: &ComplexLstmParams,
) -> Result<(ComplexVector, ComplexLstmState), ComplexNnError> {
    p.check(x, state)?;
    let h = p.hidden();

    // complex affine: (Wx x + Wh h + b) via the pair rule
    let pre_re = p.wx_re.dot(&x.re) - p.wx_im.dot(&x.im) + p.wh_re.dot(&state.hidden.re)
        - p.wh_im.dot(&state.hidden.im)
        + &p.b_re;
    let pre_im = p.wx_re.dot(&x.im) + p.wx_im.dot(&x.re) + p.wh_re.dot(&state.hidden.im)
        + p.wh_im.dot(&state.hidden.re)
        + &p.b_im;

    let mut cell = ComplexVector::zeros(h);
    let mut hidden = ComplexVector::zeros(h);
    for j in 0..h {
        let i_re = sigmoid(pre_re[j]);
        let i_im = sigmoid(pre_im[j]);
        let f_re = sigmoid(pre_re[h + j]);
        let f_im = sigmoid(pre_im[h + j]);
        let g_re = pre_re[2 * h + j].tanh();
        let g_im = pre_im[2 * h + j].tanh();
        let o_re = sigmoid(pre_re[3 * h + j]);
        let o_im = sigmoid(pre_im[3 * h + j]);

        cell.re[j] = f_re * state.cell.re[j] + i_re * g_re;
        cell.im[j] = f_im * state.cell.im[j] + i_im * g_im;
        hidden.re[j] = o_re * cell.re[j].tanh();
        hidden.im[j] = o_im * cell.im[j].tanh();
    }
    let new_state = ComplexLstmState { cell, hidden: hidden.clone() };
    Ok((hidden, new_state))
}

/// Per-part activation for encoder blocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StackActivation {
    /// PReLU with a fixed slope applied to real and imaginary parts.
    PRelu(f64),
    Identity,
}

impl StackActivation {
    fn apply(self, v: f64) -> f64 {
        match self {
            StackActivation::PRelu(slope) => {
                if v >= 0.0 {
                    v
                } else {
                    slope * v
                }
            }
            StackActivation::Identity => v,
        }
    }
}

/// Default encoder activation: PReLU, slope 0.1 on each part.
pub const DEFAULT_ACTIVATION: StackActivation = StackActivation::PRelu(0.1);

/// One encoder block: complex conv, optional complex batch norm, activation.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub conv: ComplexConvParams,
    pub norm: Option<ComplexBatchNormStats>,
    pub activation: StackActivation,
}

/// Run a block chain and return every intermediate output (the skip-
/// connection taps). Errors carry the index of the offending block.
pub fn encoder_stack_forward(
    x: &ComplexTensor,
    blocks: &[EncoderBlock],
) -> Result<Vec<ComplexTensor>, ComplexNnError> {
    let mut outputs = Vec::with_capacity(blocks.len());
    let mut current = x.clone();
    for (idx, block) in blocks.iter().enumerate() {
        let wrap = |source: ComplexNnError| ComplexNnError::Block { block: idx, source: Box::new(source) };
        let mut y = complex_conv2d(&current, &block.conv).map_err(wrap)?;
        if let Some(stats) = &block.norm {
            y = complex_batchnorm(&y, stats).map_err(wrap)?;
        }
        y.re.mapv_inplace(|v| block.activation.apply(v));
        y.im.mapv_inplace(|v| block.activation.apply(v));
        outputs.push(y.clone());
        current = y;
    }
    Ok(outputs)
}
