//! Dense row-major f32 tensors and the small set of array operations the
//! rest of the pipeline is assembled from.
//!
//! Tensors are immutable after construction and safe to share across
//! threads; every operation here is a pure function. Values are stored with
//! 32-bit precision; inner products accumulate in f64 and round once at the
//! end, so results are deterministic regardless of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dense rank-1..4 array, contiguous row-major, last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Builds a tensor from external input, rejecting NaN/Inf payloads and
    /// shape/data mismatches.
    pub fn new(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(Error::Dimension(format!(
                "tensor rank must be 1..=4, got {}",
                shape.len()
            )));
        }
        if shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} implies {expected} elements, got {}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "non-finite value {v} rejected at tensor construction"
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Internal constructor for values produced by our own arithmetic.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![0.0; n])
    }

    pub fn filled(shape: &[usize], v: f32) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![v; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Rank-2 element access.
    pub fn at2(&self, i: usize, j: usize) -> f32 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    /// Rank-3 element access (channel, row, column).
    pub fn at3(&self, c: usize, y: usize, x: usize) -> f32 {
        debug_assert_eq!(self.rank(), 3);
        self.data[(c * self.shape[1] + y) * self.shape[2] + x]
    }

    /// Rank-4 element access.
    pub fn at4(&self, a: usize, b: usize, y: usize, x: usize) -> f32 {
        debug_assert_eq!(self.rank(), 4);
        self.data[((a * self.shape[1] + b) * self.shape[2] + y) * self.shape[3] + x]
    }

    /// Contiguous `[H*W]` plane of a rank-3 tensor.
    pub fn plane(&self, c: usize) -> &[f32] {
        debug_assert_eq!(self.rank(), 3);
        let hw = self.shape[1] * self.shape[2];
        &self.data[c * hw..(c + 1) * hw]
    }

    /// Same data under a new shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.is_empty() || shape.len() > 4 {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} ({} elements) to {shape:?}",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Tensor::from_parts(shape.to_vec(), self.data.clone()))
    }

    /// Rank-2 transpose.
    pub fn transpose2d(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::Dimension(format!(
                "transpose2d expects rank 2, got {:?}",
                self.shape
            )));
        }
        let (m, n) = (self.shape[0], self.shape[1]);
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor::from_parts(vec![n, m], out))
    }

    /// Standard matrix product `[m,k] x [k,n] -> [m,n]` with row-major
    /// accumulation order.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || rhs.rank() != 2 {
            return Err(Error::Dimension(format!(
                "matmul expects rank-2 operands, got {:?} x {:?}",
                self.shape, rhs.shape
            )));
        }
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (rhs.shape[0], rhs.shape[1]);
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul inner dimensions disagree: {:?} x {:?}",
                self.shape, rhs.shape
            )));
        }
        let mut out = vec![0.0f32; m * n];
        for i in 0..m {
            let arow = &self.data[i * k..(i + 1) * k];
            let orow = &mut out[i * n..(i + 1) * n];
            let mut acc = vec![0.0f64; n];
            for (kk, &a) in arow.iter().enumerate() {
                let brow = &rhs.data[kk * n..(kk + 1) * n];
                let a = a as f64;
                for (j, &b) in brow.iter().enumerate() {
                    acc[j] += a * b as f64;
                }
            }
            for (o, &v) in orow.iter_mut().zip(acc.iter()) {
                *o = v as f32;
            }
        }
        Ok(Tensor::from_parts(vec![m, n], out))
    }

    /// Softmax over the last axis, computed with max subtraction.
    pub fn softmax_last_axis(&self) -> Result<Tensor> {
        let last = *self.shape.last().unwrap_or(&0);
        if last == 0 {
            return Err(Error::Dimension("softmax over an empty axis".into()));
        }
        let mut out = vec![0.0f32; self.data.len()];
        for (row_in, row_out) in self
            .data
            .chunks_exact(last)
            .zip(out.chunks_exact_mut(last))
        {
            let max = row_in.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
            let mut sum = 0.0f64;
            let mut exps = vec![0.0f64; last];
            for (e, &v) in exps.iter_mut().zip(row_in.iter()) {
                *e = ((v - max) as f64).exp();
                sum += *e;
            }
            for (o, &e) in row_out.iter_mut().zip(exps.iter()) {
                *o = (e / sum) as f32;
            }
        }
        Ok(Tensor::from_parts(self.shape.clone(), out))
    }

    /// Zero-padded cross-correlation of a `[C_in,H,W]` input with a kernel
    /// bank. Output spatial size is `(H + 2*pad - k)/stride + 1`.
    pub fn conv2d(&self, bank: &KernelBank, stride: usize, pad: usize) -> Result<Tensor> {
        if self.rank() != 3 {
            return Err(Error::Dimension(format!(
                "conv2d expects [C,H,W] input, got {:?}",
                self.shape
            )));
        }
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be >= 1".into()));
        }
        let (c_in, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        if bank.c_in() != c_in {
            return Err(Error::Dimension(format!(
                "kernel bank expects {} input channels, tensor has {c_in}",
                bank.c_in()
            )));
        }
        let k = bank.ksize();
        if h + 2 * pad < k || w + 2 * pad < k {
            return Err(Error::Dimension(format!(
                "non-positive conv2d output for input {h}x{w}, kernel {k}, pad {pad}"
            )));
        }
        let h_out = (h + 2 * pad - k) / stride + 1;
        let w_out = (w + 2 * pad - k) / stride + 1;
        let c_out = bank.c_out();

        let compute_plane = |co: usize| -> Vec<f32> {
            let mut acc = vec![bank.bias[co] as f64; h_out * w_out];
            for ci in 0..c_in {
                let xplane = self.plane(ci);
                for ky in 0..k {
                    let wrow = bank.kernel_row(co, ci, ky);
                    for oy in 0..h_out {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let xrow = &xplane[iy as usize * w..(iy as usize + 1) * w];
                        let arow = &mut acc[oy * w_out..(oy + 1) * w_out];
                        for (kx, &wv) in wrow.iter().enumerate() {
                            let wv = wv as f64;
                            for (ox, a) in arow.iter_mut().enumerate() {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix >= 0 && ix < w as isize {
                                    *a += wv * xrow[ix as usize] as f64;
                                }
                            }
                        }
                    }
                }
            }
            acc.into_iter().map(|v| v as f32).collect()
        };

        // Channel planes are independent; parallelize only when the work
        // amortizes the spawn cost.
        let work = c_out * c_in * k * k * h_out * w_out;
        let planes: Vec<Vec<f32>> = if work >= 1 << 18 && c_out > 1 {
            (0..c_out).into_par_iter().map(compute_plane).collect()
        } else {
            (0..c_out).map(compute_plane).collect()
        };
        let mut out = Vec::with_capacity(c_out * h_out * w_out);
        for p in planes {
            out.extend_from_slice(&p);
        }
        Ok(Tensor::from_parts(vec![c_out, h_out, w_out], out))
    }

    /// Adaptive average pooling of `[C,H,W]` to `[C,s,s]`. Cell `(i,j)`
    /// averages rows `[floor(i*H/s), ceil((i+1)*H/s))` and the analogous
    /// column range; `s == H == W` is the identity.
    pub fn adaptive_avg_pool(&self, s: usize) -> Result<Tensor> {
        if self.rank() != 3 {
            return Err(Error::Dimension(format!(
                "adaptive_avg_pool expects [C,H,W], got {:?}",
                self.shape
            )));
        }
        let (c, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        if s == 0 || s > h || s > w {
            return Err(Error::Dimension(format!(
                "pool grid {s} outside 1..=min({h},{w})"
            )));
        }
        let mut out = vec![0.0f32; c * s * s];
        for ci in 0..c {
            let plane = self.plane(ci);
            for i in 0..s {
                let y0 = i * h / s;
                let y1 = ((i + 1) * h).div_ceil(s);
                for j in 0..s {
                    let x0 = j * w / s;
                    let x1 = ((j + 1) * w).div_ceil(s);
                    let mut acc = 0.0f64;
                    for y in y0..y1 {
                        for x in x0..x1 {
                            acc += plane[y * w + x] as f64;
                        }
                    }
                    let count = ((y1 - y0) * (x1 - x0)) as f64;
                    out[(ci * s + i) * s + j] = (acc / count) as f32;
                }
            }
        }
        Ok(Tensor::from_parts(vec![c, s, s], out))
    }

    /// Bilinear resize of `[C,H,W]` to `[C,h2,w2]` with half-pixel sample
    /// centers. Constant fields are preserved exactly.
    pub fn bilinear_resize(&self, h2: usize, w2: usize) -> Result<Tensor> {
        if self.rank() != 3 {
            return Err(Error::Dimension(format!(
                "bilinear_resize expects [C,H,W], got {:?}",
                self.shape
            )));
        }
        if h2 == 0 || w2 == 0 {
            return Err(Error::Dimension("bilinear_resize target must be >= 1".into()));
        }
        let (c, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        let sy = h as f64 / h2 as f64;
        let sx = w as f64 / w2 as f64;
        // Precompute the source taps once; they are shared by all channels.
        let ytaps: Vec<(usize, usize, f64)> = (0..h2)
            .map(|oy| src_taps(oy, sy, h))
            .collect();
        let xtaps: Vec<(usize, usize, f64)> = (0..w2)
            .map(|ox| src_taps(ox, sx, w))
            .collect();
        let mut out = vec![0.0f32; c * h2 * w2];
        for ci in 0..c {
            let plane = self.plane(ci);
            let oplane = &mut out[ci * h2 * w2..(ci + 1) * h2 * w2];
            for (oy, &(y0, y1, ty)) in ytaps.iter().enumerate() {
                let r0 = &plane[y0 * w..y0 * w + w];
                let r1 = &plane[y1 * w..y1 * w + w];
                let orow = &mut oplane[oy * w2..(oy + 1) * w2];
                for (o, &(x0, x1, tx)) in orow.iter_mut().zip(xtaps.iter()) {
                    // lerp as v0 + t*(v1-v0) so constants survive bit-exactly
                    let top = r0[x0] as f64 + tx * (r0[x1] as f64 - r0[x0] as f64);
                    let bot = r1[x0] as f64 + tx * (r1[x1] as f64 - r1[x0] as f64);
                    *o = (top + ty * (bot - top)) as f32;
                }
            }
        }
        Ok(Tensor::from_parts(vec![c, h2, w2], out))
    }

    /// Elementwise sum.
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.shape != rhs.shape {
            return Err(Error::Dimension(format!(
                "add shape mismatch: {:?} vs {:?}",
                self.shape, rhs.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(rhs.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor::from_parts(self.shape.clone(), data))
    }

    pub fn scale(&self, s: f32) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|v| v * s).collect())
    }

    pub fn leaky_relu(&self, slope: f32) -> Tensor {
        let data = self
            .data
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        Tensor::from_parts(self.shape.clone(), data)
    }

    pub fn tanh(&self) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|v| v.tanh()).collect())
    }

    pub fn sigmoid(&self) -> Tensor {
        let data = self
            .data
            .iter()
            .map(|&v| 1.0 / (1.0 + (-v).exp()))
            .collect();
        Tensor::from_parts(self.shape.clone(), data)
    }
}

/// Source taps for one output coordinate under half-pixel-center sampling.
fn src_taps(o: usize, scale: f64, extent: usize) -> (usize, usize, f64) {
    let s = (o as f64 + 0.5) * scale - 0.5;
    let s = s.clamp(0.0, (extent - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(extent - 1);
    (i0, i1, s - i0 as f64)
}

/// Channel-axis concatenation of `[C_i,H,W]` tensors in argument order.
pub fn concat_channels(xs: &[&Tensor]) -> Result<Tensor> {
    if xs.is_empty() {
        return Err(Error::Dimension("concat_channels of zero tensors".into()));
    }
    let (h, w) = (xs[0].shape[1], xs[0].shape[2]);
    let mut c_total = 0;
    for t in xs {
        if t.rank() != 3 {
            return Err(Error::Dimension(format!(
                "concat_channels expects [C,H,W], got {:?}",
                t.shape
            )));
        }
        if t.shape[1] != h || t.shape[2] != w {
            return Err(Error::Dimension(format!(
                "concat_channels spatial mismatch: {:?} vs [{},{}]",
                t.shape, h, w
            )));
        }
        c_total += t.shape[0];
    }
    let mut data = Vec::with_capacity(c_total * h * w);
    for t in xs {
        data.extend_from_slice(&t.data);
    }
    Ok(Tensor::from_parts(vec![c_total, h, w], data))
}

/// Static convolution parameters: a `[C_out,C_in,k,k]` weight tensor plus a
/// per-output-channel bias.
#[derive(Debug, Clone)]
pub struct KernelBank {
    pub weight: Tensor,
    pub bias: Vec<f32>,
}

impl KernelBank {
    pub fn new(weight: Tensor, bias: Vec<f32>) -> Result<Self> {
        if weight.rank() != 4 {
            return Err(Error::Dimension(format!(
                "kernel bank weight must be [C_out,C_in,k,k], got {:?}",
                weight.shape
            )));
        }
        let (kh, kw) = (weight.shape[2], weight.shape[3]);
        if kh != kw || kh.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel spatial size must be square and odd, got {kh}x{kw}"
            )));
        }
        if bias.len() != weight.shape[0] {
            return Err(Error::Dimension(format!(
                "bias length {} does not match {} output channels",
                bias.len(),
                weight.shape[0]
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn ksize(&self) -> usize {
        self.weight.shape[2]
    }

    fn kernel_row(&self, co: usize, ci: usize, ky: usize) -> &[f32] {
        let k = self.ksize();
        let base = ((co * self.c_in() + ci) * k + ky) * k;
        &self.weight.data[base..base + k]
    }
}
