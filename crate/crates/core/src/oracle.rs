//! Brute-force reference implementations.
//!
//! Every function here evaluates its definition literally, element by
//! element, with no vectorization, buffer reuse, or layout tricks. They
//! exist to check the production paths and to anchor the benchmark
//! comparisons; nothing in the main pipeline calls them.

use crate::ddca::DynamicKernelField;
use crate::tensor::{KernelBank, Tensor};

/// Scalar triple-loop matrix product.
pub fn matmul_oracle(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = vec![0.0f32; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f64;
            for kk in 0..k {
                acc += a.at2(i, kk) as f64 * b.at2(kk, j) as f64;
            }
            out[i * n + j] = acc as f32;
        }
    }
    Tensor::from_parts(vec![m, n], out)
}

/// Six-loop zero-padded cross-correlation.
pub fn conv2d_oracle(x: &Tensor, bank: &KernelBank, stride: usize, pad: usize) -> Tensor {
    let (c_in, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let c_out = bank.c_out();
    let k = bank.ksize();
    let h_out = (h + 2 * pad - k) / stride + 1;
    let w_out = (w + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0f32; c_out * h_out * w_out];
    for co in 0..c_out {
        for oy in 0..h_out {
            for ox in 0..w_out {
                let mut acc = bank.bias[co] as f64;
                for ci in 0..c_in {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                acc += bank.weight.at4(co, ci, ky, kx) as f64
                                    * x.at3(ci, iy as usize, ix as usize) as f64;
                            }
                        }
                    }
                }
                out[(co * h_out + oy) * w_out + ox] = acc as f32;
            }
        }
    }
    Tensor::from_parts(vec![c_out, h_out, w_out], out)
}

/// Literal cell-by-cell adaptive average pooling.
pub fn adaptive_avg_pool_oracle(x: &Tensor, s: usize) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = vec![0.0f32; c * s * s];
    for ci in 0..c {
        for i in 0..s {
            for j in 0..s {
                let y0 = i * h / s;
                let y1 = ((i + 1) * h).div_ceil(s);
                let x0 = j * w / s;
                let x1 = ((j + 1) * w).div_ceil(s);
                let mut acc = 0.0f64;
                let mut count = 0usize;
                for y in y0..y1 {
                    for xx in x0..x1 {
                        acc += x.at3(ci, y, xx) as f64;
                        count += 1;
                    }
                }
                out[(ci * s + i) * s + j] = (acc / count as f64) as f32;
            }
        }
    }
    Tensor::from_parts(vec![c, s, s], out)
}

/// Per-pixel closed-form bilinear interpolation with half-pixel centers.
pub fn bilinear_oracle(x: &Tensor, h2: usize, w2: usize) -> Tensor {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = vec![0.0f32; c * h2 * w2];
    for ci in 0..c {
        for oy in 0..h2 {
            for ox in 0..w2 {
                let sy = ((oy as f64 + 0.5) * h as f64 / h2 as f64 - 0.5)
                    .clamp(0.0, (h - 1) as f64);
                let sx = ((ox as f64 + 0.5) * w as f64 / w2 as f64 - 0.5)
                    .clamp(0.0, (w - 1) as f64);
                let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
                let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
                let (ty, tx) = (sy - y0 as f64, sx - x0 as f64);
                let v00 = x.at3(ci, y0, x0) as f64;
                let v01 = x.at3(ci, y0, x1) as f64;
                let v10 = x.at3(ci, y1, x0) as f64;
                let v11 = x.at3(ci, y1, x1) as f64;
                let v = v00 * (1.0 - ty) * (1.0 - tx)
                    + v01 * (1.0 - ty) * tx
                    + v10 * ty * (1.0 - tx)
                    + v11 * ty * tx;
                out[(ci * h2 + oy) * w2 + ox] = v as f32;
            }
        }
    }
    Tensor::from_parts(vec![c, h2, w2], out)
}

/// Per-pixel kernel-materialization dynamic group convolution: for every
/// pixel the kernel row is copied out into a fresh K x K buffer before the
/// window sum, exactly as the definition reads.
pub fn dynamic_group_conv_oracle(x: &Tensor, field: &DynamicKernelField) -> Tensor {
    let (c_x, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let g = field.groups();
    let per_group = c_x / g;
    let k = field.kernel_size;
    let half = (k / 2) as isize;
    let mut out = vec![0.0f32; c_x * h * w];
    for y in 0..h {
        for xx in 0..w {
            let p = y * w + xx;
            for gi in 0..g {
                // materialize this pixel's kernel
                let row = field.row(gi, p);
                let mut kernel = vec![vec![0.0f32; k]; k];
                for (o, &m) in row.iter().enumerate() {
                    kernel[o / k][o % k] = m;
                }
                for c_local in 0..per_group {
                    let c = gi * per_group + c_local;
                    let mut acc = 0.0f64;
                    for (ki, krow) in kernel.iter().enumerate() {
                        for (kj, &m) in krow.iter().enumerate() {
                            let iy = y as isize + ki as isize - half;
                            let ix = xx as isize + kj as isize - half;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                acc += m as f64 * x.at3(c, iy as usize, ix as usize) as f64;
                            }
                        }
                    }
                    out[(c * h + y) * w + xx] = acc as f32;
                }
            }
        }
    }
    Tensor::from_parts(vec![c_x, h, w], out)
}

/// Per-pixel soft-argmin: softmax probabilities are materialized and the
/// expectation is taken as an explicit weighted sum.
pub fn soft_argmin_oracle(scores: &Tensor) -> Tensor {
    let (d, h, w) = (scores.shape()[0], scores.shape()[1], scores.shape()[2]);
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut max = f64::NEG_INFINITY;
            for di in 0..d {
                max = max.max(scores.at3(di, y, x) as f64);
            }
            let mut probs = vec![0.0f64; d];
            let mut sum = 0.0f64;
            for (di, p) in probs.iter_mut().enumerate() {
                *p = ((scores.at3(di, y, x) as f64) - max).exp();
                sum += *p;
            }
            let mut expectation = 0.0f64;
            for (di, p) in probs.iter().enumerate() {
                expectation += di as f64 * (*p / sum);
            }
            out[y * w + x] = expectation as f32;
        }
    }
    Tensor::from_parts(vec![1, h, w], out)
}

/// Scalar gather with linear interpolation along the disparity axis and
/// zero fill outside the hypothesis range.
pub fn lookup_geometry_oracle(volume: &Tensor, disparity: &Tensor, radius: usize) -> Tensor {
    let (g, d4, h, w) = (
        volume.shape()[0],
        volume.shape()[1],
        volume.shape()[2],
        volume.shape()[3],
    );
    let taps = 2 * radius + 1;
    let mut out = vec![0.0f32; taps * g * h * w];
    for y in 0..h {
        for x in 0..w {
            let base = disparity.at3(0, y, x) as f64;
            for (oi, off) in (-(radius as isize)..=radius as isize).enumerate() {
                let pos = base + off as f64;
                for gi in 0..g {
                    let sample = if pos < 0.0 || pos > (d4 - 1) as f64 {
                        // partial overlap still contributes its in-range side
                        let lo = pos.floor();
                        let hi = lo + 1.0;
                        let t = pos - lo;
                        let mut v = 0.0f64;
                        if lo >= 0.0 && lo <= (d4 - 1) as f64 {
                            v += (1.0 - t) * volume.at4(gi, lo as usize, y, x) as f64;
                        }
                        if hi >= 0.0 && hi <= (d4 - 1) as f64 {
                            v += t * volume.at4(gi, hi as usize, y, x) as f64;
                        }
                        v
                    } else {
                        let lo = pos.floor() as usize;
                        let hi = (lo + 1).min(d4 - 1);
                        let t = pos - lo as f64;
                        (1.0 - t) * volume.at4(gi, lo, y, x) as f64
                            + t * volume.at4(gi, hi, y, x) as f64
                    };
                    out[((oi * g + gi) * h + y) * w + x] = sample as f32;
                }
            }
        }
    }
    Tensor::from_parts(vec![taps * g, h, w], out)
}
