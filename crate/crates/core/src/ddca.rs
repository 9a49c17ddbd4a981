//! Depth-aware dynamic cost aggregation.
//!
//! Every disparity slice of the raw correlation volume is aggregated
//! independently: the slice is projected to query channels, the depth-aware
//! features are pooled into regional centers and projected to key channels,
//! their group-wise products form per-pixel affinity rows, a learned linear
//! map plus softmax turns each row into a K x K convolution kernel, and the
//! slice (joined with projected depth-aware features) is filtered by those
//! kernels with a sliding window. A small and a large kernel branch are
//! summed and projected back to the group channels, and soft-argmin over the
//! reduced scores yields the initial disparity.

use rayon::prelude::*;

use crate::cost_volume::{CostVolume, VolumeKind};
use crate::error::{Error, Result};
use crate::io::config::RunConfig;
use crate::tensor::{concat_channels, KernelBank, Tensor};
use crate::weights::{Linear, ModelWeights};

/// Aggregation hyperparameters, split out of the full run configuration.
#[derive(Debug, Clone, Copy)]
pub struct DdcaConfig {
    pub groups: usize,
    /// Pooled regional-center grid side.
    pub s: usize,
    pub k_small: usize,
    pub k_large: usize,
}

impl From<&RunConfig> for DdcaConfig {
    fn from(cfg: &RunConfig) -> Self {
        Self {
            groups: cfg.groups,
            s: cfg.s,
            k_small: cfg.k_small,
            k_large: cfg.k_large,
        }
    }
}

/// Query/key projections and the per-group affinity matrices
/// `A^g = (Q^g)^T K^g` for one disparity slice.
#[derive(Debug, Clone)]
pub struct AffinityBundle {
    pub q: Tensor,
    pub k: Tensor,
    pub groups: Vec<Tensor>,
    pub h: usize,
    pub w: usize,
}

/// Per-pixel, group-shared convolution kernels: one `[H*W, K*K]` row matrix
/// per group, every row a softmax distribution. A tap-major f64 transpose
/// of each matrix is kept alongside so the sliding-window convolution reads
/// contiguous weight runs.
#[derive(Debug, Clone)]
pub struct DynamicKernelField {
    per_group: Vec<Tensor>,
    /// `[K*K, H*W]` per group, widened once at construction.
    per_group_taps: Vec<Vec<f64>>,
    pub kernel_size: usize,
    pub h: usize,
    pub w: usize,
}

impl DynamicKernelField {
    pub fn new(per_group: Vec<Tensor>, kernel_size: usize, h: usize, w: usize) -> Result<Self> {
        if kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "dynamic kernel size {kernel_size} must be odd"
            )));
        }
        let kk = kernel_size * kernel_size;
        let hw = h * w;
        let mut per_group_taps = Vec::with_capacity(per_group.len());
        for m in &per_group {
            if m.shape() != [hw, kk] {
                return Err(Error::Dimension(format!(
                    "kernel matrix {:?} does not match [{hw}, {kk}]",
                    m.shape()
                )));
            }
            let mut taps = vec![0.0f64; kk * hw];
            for (p, row) in m.data().chunks_exact(kk).enumerate() {
                for (o, &v) in row.iter().enumerate() {
                    taps[o * hw + p] = v as f64;
                }
            }
            per_group_taps.push(taps);
        }
        Ok(Self {
            per_group,
            per_group_taps,
            kernel_size,
            h,
            w,
        })
    }

    pub fn groups(&self) -> usize {
        self.per_group.len()
    }

    /// Kernel row for (group, pixel), length `kernel_size^2`, row-major over
    /// the K x K window.
    pub fn row(&self, group: usize, pixel: usize) -> &[f32] {
        let kk = self.kernel_size * self.kernel_size;
        &self.per_group[group].data()[pixel * kk..(pixel + 1) * kk]
    }

    pub fn group_matrix(&self, group: usize) -> &Tensor {
        &self.per_group[group]
    }

    fn group_taps(&self, group: usize) -> &[f64] {
        &self.per_group_taps[group]
    }
}

/// Projects a cost slice and pooled depth-aware centers into query/key
/// space and multiplies them group-wise.
pub fn compute_affinity(
    c_d: &Tensor,
    f_da: &Tensor,
    weights: &ModelWeights,
    s: usize,
    groups: usize,
) -> Result<AffinityBundle> {
    let (h, w) = (c_d.shape()[1], c_d.shape()[2]);
    if f_da.shape()[1] != h || f_da.shape()[2] != w {
        return Err(Error::Dimension(format!(
            "cost slice {:?} and features {:?} disagree spatially",
            c_d.shape(),
            f_da.shape()
        )));
    }
    let q3 = c_d.conv2d(&weights.w_q, 1, 0)?;
    let c = q3.shape()[0];
    if !c.is_multiple_of(groups) {
        return Err(Error::Config(format!(
            "query channels {c} not divisible by {groups} groups"
        )));
    }
    let pooled = f_da.adaptive_avg_pool(s)?;
    let k3 = pooled.conv2d(&weights.w_k, 1, 0)?;
    if k3.shape()[0] != c {
        return Err(Error::Config(format!(
            "key channels {} do not match query channels {c}",
            k3.shape()[0]
        )));
    }
    let q = q3.reshape(&[c, h * w])?;
    let k = k3.reshape(&[c, s * s])?;

    let per = c / groups;
    let mut group_mats = Vec::with_capacity(groups);
    for g in 0..groups {
        let q_g = Tensor::from_parts(
            vec![per, h * w],
            q.data()[g * per * h * w..(g + 1) * per * h * w].to_vec(),
        );
        let k_g = Tensor::from_parts(
            vec![per, s * s],
            k.data()[g * per * s * s..(g + 1) * per * s * s].to_vec(),
        );
        group_mats.push(q_g.transpose2d()?.matmul(&k_g)?);
    }
    Ok(AffinityBundle {
        q,
        k,
        groups: group_mats,
        h,
        w,
    })
}

/// Maps every affinity row through `W_m` and a row softmax, yielding the
/// per-pixel kernel field for one branch.
pub fn kernels_from_affinity(
    affinity: &AffinityBundle,
    w_m: &Linear,
    k: usize,
) -> Result<DynamicKernelField> {
    if k.is_multiple_of(2) {
        return Err(Error::Config(format!("dynamic kernel size {k} must be odd")));
    }
    if w_m.out_dim() != k * k {
        return Err(Error::Config(format!(
            "W_m maps to {} values but kernel size {k} needs {}",
            w_m.out_dim(),
            k * k
        )));
    }
    let wt = w_m.weight.transpose2d()?;
    let mut per_group = Vec::with_capacity(affinity.groups.len());
    for a_g in &affinity.groups {
        if a_g.shape()[1] != w_m.in_dim() {
            return Err(Error::Config(format!(
                "affinity rows have {} centers, W_m expects {}",
                a_g.shape()[1],
                w_m.in_dim()
            )));
        }
        let mut logits = a_g.matmul(&wt)?;
        // broadcast bias over rows
        let kk = k * k;
        let mut data = logits.into_data();
        for row in data.chunks_exact_mut(kk) {
            for (v, b) in row.iter_mut().zip(w_m.bias.iter()) {
                *v += b;
            }
        }
        logits = Tensor::from_parts(vec![affinity.h * affinity.w, kk], data);
        per_group.push(logits.softmax_last_axis()?);
    }
    DynamicKernelField::new(per_group, k, affinity.h, affinity.w)
}

/// Sliding-window group convolution with per-pixel kernels. Channels within
/// a group share the pixel's kernel; borders are zero padded. Tap order is
/// row-major over the window, matching the materialization oracle term for
/// term so outputs are bit-identical.
///
/// The kernel field matrix is streamed exactly once per group (pixel-outer
/// loop) and each kernel row is applied to all channels of its group while
/// it is hot; interior pixels skip bounds handling entirely.
pub fn dynamic_group_conv(x: &Tensor, field: &DynamicKernelField) -> Result<Tensor> {
    let (c_x, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let g = field.groups();
    if !c_x.is_multiple_of(g) {
        return Err(Error::Config(format!(
            "{c_x} channels not divisible by {g} kernel groups"
        )));
    }
    if field.h != h || field.w != w {
        return Err(Error::Dimension(format!(
            "kernel field is {}x{}, input is {h}x{w}",
            field.h, field.w
        )));
    }
    let per_group = c_x / g;
    let k = field.kernel_size;
    let kk = k * k;
    let half = k / 2;

    let group_out = |gi: usize| -> Vec<f32> {
        let taps = field.group_taps(gi);
        // f32 -> f64 conversion is exact, so widening the input up front
        // changes nothing numerically and strips the converts out of the
        // inner loop.
        let planes: Vec<Vec<f64>> = (gi * per_group..(gi + 1) * per_group)
            .map(|c| x.plane(c).iter().map(|&v| v as f64).collect())
            .collect();
        let mut out = vec![0.0f32; per_group * h * w];
        // One output row at a time; tap weights, input row, and the per-x
        // accumulators are all contiguous runs and each x is an independent
        // accumulation chain.
        let mut acc = vec![0.0f64; w];
        let hw = h * w;
        for y in 0..h {
            for (c, plane) in planes.iter().enumerate() {
                acc.iter_mut().for_each(|a| *a = 0.0);
                for ki in 0..k {
                    let iy = y as isize + ki as isize - half as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let xrow = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for kj in 0..k {
                        let o = ki * k + kj;
                        let dx = kj as isize - half as isize;
                        let x_lo = (-dx).max(0) as usize;
                        let x_hi = ((w as isize - dx).min(w as isize)) as usize;
                        let n = x_hi - x_lo;
                        let xs = &xrow[(x_lo as isize + dx) as usize..][..n];
                        let ms = &taps[o * hw + y * w + x_lo..][..n];
                        let aa = &mut acc[x_lo..][..n];
                        for i in 0..n {
                            aa[i] += ms[i] * xs[i];
                        }
                    }
                }
                let orow = &mut out[c * hw + y * w..c * hw + (y + 1) * w];
                for (o, a) in orow.iter_mut().zip(acc.iter()) {
                    *o = *a as f32;
                }
            }
        }
        out
    };

    // Groups are independent; parallelize when the work amortizes spawns.
    let work = c_x * h * w * kk;
    let per_group_out: Vec<Vec<f32>> = if work >= 1 << 18 && g > 1 {
        (0..g).into_par_iter().map(group_out).collect()
    } else {
        (0..g).map(group_out).collect()
    };
    let mut out = Vec::with_capacity(c_x * h * w);
    for p in per_group_out {
        out.extend_from_slice(&p);
    }
    Ok(Tensor::from_parts(vec![c_x, h, w], out))
}

/// Aggregates one raw slice: affinity, both kernel branches, dynamic
/// convolution of the slice joined with projected features, branch sum,
/// and the 1x1 projection back to group channels.
fn aggregate_slice(
    c_d: &Tensor,
    f_da: &Tensor,
    fda_projected: &Tensor,
    weights: &ModelWeights,
    cfg: &DdcaConfig,
) -> Result<Tensor> {
    let affinity = compute_affinity(c_d, f_da, weights, cfg.s, cfg.groups)?;
    let joined = concat_channels(&[c_d, fda_projected])?;
    let small = kernels_from_affinity(&affinity, &weights.w_m_small, cfg.k_small)?;
    let large = kernels_from_affinity(&affinity, &weights.w_m_large, cfg.k_large)?;
    let y_small = dynamic_group_conv(&joined, &small)?;
    let y_large = dynamic_group_conv(&joined, &large)?;
    let summed = y_small.add(&y_large)?;
    summed.conv2d(&weights.agg_out, 1, 0)
}

/// Runs dynamic aggregation over every disparity slice independently and
/// reassembles the slices in disparity order.
pub fn ddca_aggregate(
    volume: &CostVolume,
    f_da4: &Tensor,
    weights: &ModelWeights,
    cfg: &DdcaConfig,
) -> Result<CostVolume> {
    if volume.kind != VolumeKind::Raw {
        return Err(Error::Config("ddca_aggregate expects a raw volume".into()));
    }
    let shape = volume.data.shape();
    let (g, d4, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    if g != cfg.groups {
        return Err(Error::Config(format!(
            "volume has {g} groups, config says {}",
            cfg.groups
        )));
    }
    let fda_projected = f_da4.conv2d(&weights.fda_proj, 1, 0)?;
    if fda_projected.shape()[1] != h || fda_projected.shape()[2] != w {
        return Err(Error::Dimension(
            "depth-aware features must be at the volume's resolution".into(),
        ));
    }

    let slices: Vec<Result<Tensor>> = (0..d4)
        .into_par_iter()
        .map(|d| {
            let c_d = volume.slice(d);
            aggregate_slice(&c_d, f_da4, &fda_projected, weights, cfg)
        })
        .collect();

    let mut out = vec![0.0f32; g * d4 * h * w];
    for (d, slice) in slices.into_iter().enumerate() {
        let slice = slice?;
        for gi in 0..g {
            let src = slice.plane(gi);
            let dst = &mut out[(gi * d4 + d) * h * w..(gi * d4 + d + 1) * h * w];
            dst.copy_from_slice(src);
        }
    }
    Ok(CostVolume {
        data: Tensor::from_parts(vec![g, d4, h, w], out),
        kind: VolumeKind::Aggregated,
    })
}

/// Reduces the aggregated volume's group channels to one score per
/// hypothesis with the learned 1x1 head, then regresses the disparity
/// expectation under the per-pixel softmax. Output lies in `[0, D4-1]`.
pub fn soft_argmin(volume: &CostVolume, weights: &ModelWeights) -> Result<Tensor> {
    if volume.kind != VolumeKind::Aggregated {
        return Err(Error::Config("soft_argmin expects an aggregated volume".into()));
    }
    let scores = score_volume(volume, &weights.score)?;
    Ok(soft_argmin_scores(&scores))
}

/// Applies the 1x1 group-to-score reduction, producing `[D4, H, W]`.
pub fn score_volume(volume: &CostVolume, head: &KernelBank) -> Result<Tensor> {
    let shape = volume.data.shape();
    let (g, d4, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    if head.c_in() != g || head.c_out() != 1 || head.ksize() != 1 {
        return Err(Error::Config(
            "score head must be a 1x1 reduction over the group channels".into(),
        ));
    }
    let mut out = vec![0.0f32; d4 * h * w];
    let hw = h * w;
    for d in 0..d4 {
        let dst = &mut out[d * hw..(d + 1) * hw];
        for (i, v) in dst.iter_mut().enumerate() {
            let mut acc = head.bias[0] as f64;
            for gi in 0..g {
                acc += head.weight.data()[gi] as f64
                    * volume.data.data()[(gi * d4 + d) * hw + i] as f64;
            }
            *v = acc as f32;
        }
    }
    Ok(Tensor::from_parts(vec![d4, h, w], out))
}

/// Disparity expectation under the softmax over hypothesis scores,
/// computed as a single numerator/denominator ratio so that uniform scores
/// give exactly `(D4-1)/2`.
pub fn soft_argmin_scores(scores: &Tensor) -> Tensor {
    let (d4, h, w) = (scores.shape()[0], scores.shape()[1], scores.shape()[2]);
    let hw = h * w;
    let mut out = vec![0.0f32; hw];
    for (i, o) in out.iter_mut().enumerate() {
        let mut max = f32::NEG_INFINITY;
        for d in 0..d4 {
            max = max.max(scores.data()[d * hw + i]);
        }
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for d in 0..d4 {
            let e = ((scores.data()[d * hw + i] - max) as f64).exp();
            num += d as f64 * e;
            den += e;
        }
        *o = (num / den) as f32;
    }
    Tensor::from_parts(vec![1, h, w], out)
}
