//! Disparity metrics (EPE, bad-x fractions, noc/all regions), the sequence
//! loss as a forward evaluation functional, and a random-dot stereogram
//! generator with exact ground truth and occlusion masks for desk-scale
//! end-to-end tests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::StereoPair;
use crate::refine::{DisparityMap, Mask, Resolution};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Serialized metric summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub epe: f64,
    pub bad: BTreeMap<String, f64>,
    pub region: String,
    pub n_valid: usize,
}

fn joint_mask(pred: &DisparityMap, gt: &DisparityMap, region: Option<&Mask>) -> Result<Mask> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::Dimension(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    let mut joint = pred.valid.and(&gt.valid)?;
    if let Some(m) = region {
        joint = joint.and(m)?;
    }
    Ok(joint)
}

/// Mean absolute disparity error over pixels valid in both maps (and in
/// the region mask, when given).
pub fn epe(pred: &DisparityMap, gt: &DisparityMap, region: Option<&Mask>) -> Result<f64> {
    let joint = joint_mask(pred, gt, region)?;
    let mut acc = 0.0f64;
    let mut n = 0usize;
    for (i, &ok) in joint.data.iter().enumerate() {
        if ok {
            acc += (pred.values.data()[i] as f64 - gt.values.data()[i] as f64).abs();
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("no valid pixels for EPE".into()));
    }
    Ok(acc / n as f64)
}

/// Fraction of valid masked pixels whose error strictly exceeds the
/// threshold.
pub fn bad_ratio(
    pred: &DisparityMap,
    gt: &DisparityMap,
    threshold: f64,
    region: Option<&Mask>,
) -> Result<f64> {
    if threshold <= 0.0 {
        return Err(Error::Config(format!(
            "bad-pixel threshold must be positive, got {threshold}"
        )));
    }
    let joint = joint_mask(pred, gt, region)?;
    let mut bad = 0usize;
    let mut n = 0usize;
    for (i, &ok) in joint.data.iter().enumerate() {
        if ok {
            let err = (pred.values.data()[i] as f64 - gt.values.data()[i] as f64).abs();
            if err > threshold {
                bad += 1;
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("no valid pixels for bad ratio".into()));
    }
    Ok(bad as f64 / n as f64)
}

/// Builds the serialized report for a set of thresholds.
pub fn metric_report(
    pred: &DisparityMap,
    gt: &DisparityMap,
    thresholds: &[f64],
    region: Option<&Mask>,
    region_name: &str,
) -> Result<MetricReport> {
    let mut bad = BTreeMap::new();
    for &t in thresholds {
        bad.insert(format!("{t:.1}"), bad_ratio(pred, gt, t, region)?);
    }
    Ok(MetricReport {
        epe: epe(pred, gt, region)?,
        bad,
        region: region_name.to_string(),
        n_valid: joint_mask(pred, gt, region)?.count_true(),
    })
}

/// Smooth-L1 on the initial disparity plus decayed L1 over the refinement
/// iterates: `smoothL1(d0) + sum_i gamma^(N-i) * mean|d_i - gt|`.
pub fn sequence_loss(
    d0: &DisparityMap,
    iterates: &[DisparityMap],
    gt: &DisparityMap,
    gamma: f64,
    beta: f64,
) -> Result<f64> {
    if !(0.0 < gamma && gamma <= 1.0) {
        return Err(Error::Config(format!("gamma must be in (0,1], got {gamma}")));
    }
    if beta <= 0.0 {
        return Err(Error::Config(format!("beta must be positive, got {beta}")));
    }
    let joint = joint_mask(d0, gt, None)?;
    let n_valid = joint.count_true();
    if n_valid == 0 {
        return Err(Error::UndefinedMetric("no valid pixels for loss".into()));
    }
    let mut smooth = 0.0f64;
    for (i, &ok) in joint.data.iter().enumerate() {
        if ok {
            let e = (d0.values.data()[i] as f64 - gt.values.data()[i] as f64).abs();
            smooth += if e < beta {
                0.5 * e * e / beta
            } else {
                e - 0.5 * beta
            };
        }
    }
    let mut total = smooth / n_valid as f64;
    let n = iterates.len();
    for (idx, it) in iterates.iter().enumerate() {
        let weight = gamma.powi((n - 1 - idx) as i32);
        total += weight * epe(it, gt, None)?;
    }
    Ok(total)
}

/// Bilinear 4x upsampling of a quarter-resolution map with the matching
/// 4x value scaling, used to compare the initial disparity against
/// full-resolution ground truth.
pub fn upscale_quarter_map(d: &DisparityMap) -> Result<DisparityMap> {
    if d.resolution != Resolution::Quarter {
        return Err(Error::Config("expected a quarter-resolution map".into()));
    }
    let up = d
        .values
        .bilinear_resize(4 * d.height(), 4 * d.width())?
        .scale(4.0);
    DisparityMap::dense(up, Resolution::Full)
}

/// Disparity content of one plane: constant, or a horizontal ramp
/// `base + per_pixel * (x - x0)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlaneDisparity {
    Constant(f32),
    RampX { base: f32, per_pixel: f32 },
}

/// Axis-aligned plane: `rect` is `[x0, y0, x1, y1)`; `None` covers the
/// whole image. Planes paint in list order, later entries in front.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub rect: Option<[usize; 4]>,
    pub disparity: PlaneDisparity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneDescriptor {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub planes: Vec<PlaneSpec>,
}

/// Synthetic stereo scene: random-dot pair, dense ground truth on the left
/// image, and the left-image occlusion mask.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub pair: StereoPair,
    pub gt: DisparityMap,
    pub occlusion: Mask,
    pub descriptor: SceneDescriptor,
}

impl SyntheticScene {
    /// Non-occluded region mask.
    pub fn noc_mask(&self) -> Mask {
        self.occlusion.not()
    }
}

/// Generates a random-dot stereogram. The left image is seeded per-pixel
/// RGB noise; the right image is the inverse warp of the left by the
/// ground-truth disparity with nearer planes winning contested columns.
/// Right-image pixels with no source receive fresh noise. Only
/// integer-valued disparity fields are supported (no interpolation).
pub fn generate_stereogram(
    h: usize,
    w: usize,
    layout: &[PlaneSpec],
    seed: u64,
) -> Result<SyntheticScene> {
    if h == 0 || w == 0 || !h.is_multiple_of(16) || !w.is_multiple_of(16) {
        return Err(Error::SceneSpec(format!(
            "scene dimensions must be positive multiples of 16, got {h}x{w}"
        )));
    }
    // paint ground truth, later planes in front
    let mut gt = vec![0.0f32; h * w];
    for spec in layout {
        let [x0, y0, x1, y1] = match spec.rect {
            Some(r) => r,
            None => [0, 0, w, h],
        };
        if x1 > w || y1 > h || x0 >= x1 || y0 >= y1 {
            return Err(Error::SceneSpec(format!(
                "plane rect [{x0},{y0},{x1},{y1}) outside {w}x{h} image"
            )));
        }
        for y in y0..y1 {
            for x in x0..x1 {
                let d = match spec.disparity {
                    PlaneDisparity::Constant(d) => d,
                    PlaneDisparity::RampX { base, per_pixel } => {
                        base + per_pixel * (x - x0) as f32
                    }
                };
                gt[y * w + x] = d;
            }
        }
    }
    for (i, &d) in gt.iter().enumerate() {
        if d < 0.0 || d as usize >= w {
            return Err(Error::SceneSpec(format!(
                "disparity {d} at pixel {i} outside [0, {w})"
            )));
        }
        if d.fract() != 0.0 {
            return Err(Error::SceneSpec(format!(
                "non-integer disparity {d} requires interpolation, which the \
                 generator does not support"
            )));
        }
    }

    // left image: seeded random dots
    let mut rng = SplitMix64::new(seed);
    let left_data: Vec<f32> = (0..3 * h * w).map(|_| rng.next_unit()).collect();
    let left = Tensor::from_parts(vec![3, h, w], left_data);

    // forward warp with a disparity z-buffer per right column
    let mut winner: Vec<Option<usize>> = vec![None; h * w]; // right pixel -> left x
    let mut occluded = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let d = gt[y * w + x] as usize;
            if d > x {
                occluded[y * w + x] = true; // maps outside the right image
                continue;
            }
            let xr = x - d;
            match winner[y * w + xr] {
                Some(prev) if gt[y * w + prev] >= gt[y * w + x] => {
                    occluded[y * w + x] = true; // nearer surface already claimed it
                }
                other => {
                    if let Some(prev) = other {
                        occluded[y * w + prev] = true;
                    }
                    winner[y * w + xr] = Some(x);
                }
            }
        }
    }

    let mut right_data = vec![0.0f32; 3 * h * w];
    let mut hole_rng = SplitMix64::new(seed ^ 0x5EED_0FF1);
    for y in 0..h {
        for xr in 0..w {
            match winner[y * w + xr] {
                Some(xl) => {
                    for c in 0..3 {
                        right_data[(c * h + y) * w + xr] = left.at3(c, y, xl);
                    }
                }
                None => {
                    for c in 0..3 {
                        right_data[(c * h + y) * w + xr] = hole_rng.next_unit();
                    }
                }
            }
        }
    }
    let right = Tensor::from_parts(vec![3, h, w], right_data);

    Ok(SyntheticScene {
        pair: StereoPair::new(left, right)?,
        gt: DisparityMap::dense(Tensor::from_parts(vec![1, h, w], gt), Resolution::Full)?,
        occlusion: Mask {
            h,
            w,
            data: occluded,
        },
        descriptor: SceneDescriptor {
            seed,
            height: h,
            width: w,
            planes: layout.to_vec(),
        },
    })
}

/// Grayscale mean over RGB channels.
pub fn to_grayscale(img: &Tensor) -> Tensor {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let mut out = vec![0.0f32; h * w];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for c in 0..img.shape()[0] {
            acc += img.data()[c * h * w + i] as f64;
        }
        *o = (acc / img.shape()[0] as f64) as f32;
    }
    Tensor::from_parts(vec![1, h, w], out)
}

/// Non-overlapping block mean downsampling by an integer factor. Commutes
/// exactly with translations by multiples of the factor.
pub fn block_mean_downsample(img: &Tensor, factor: usize) -> Result<Tensor> {
    let (c, h, w) = (img.shape()[0], img.shape()[1], img.shape()[2]);
    if factor == 0 || !h.is_multiple_of(factor) || !w.is_multiple_of(factor) {
        return Err(Error::Dimension(format!(
            "{h}x{w} not divisible by block factor {factor}"
        )));
    }
    let (h2, w2) = (h / factor, w / factor);
    let mut out = vec![0.0f32; c * h2 * w2];
    for ci in 0..c {
        let plane = img.plane(ci);
        for y in 0..h2 {
            for x in 0..w2 {
                let mut acc = 0.0f64;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += plane[(y * factor + dy) * w + x * factor + dx] as f64;
                    }
                }
                out[(ci * h2 + y) * w2 + x] = (acc / (factor * factor) as f64) as f32;
            }
        }
    }
    Ok(Tensor::from_parts(vec![c, h2, w2], out))
}

/// Census-style descriptor: each channel is the sign (+1/-1) of one
/// neighbor-vs-center comparison over a `(2r+1)^2` window, center excluded.
/// Border neighbors are edge-replicated.
pub fn census_features(gray: &Tensor, radius: usize) -> Result<Tensor> {
    if gray.rank() != 3 || gray.shape()[0] != 1 {
        return Err(Error::Dimension(format!(
            "census expects [1,H,W], got {:?}",
            gray.shape()
        )));
    }
    let (h, w) = (gray.shape()[1], gray.shape()[2]);
    let side = 2 * radius + 1;
    let channels = side * side - 1;
    let plane = gray.plane(0);
    let mut out = vec![0.0f32; channels * h * w];
    let mut ci = 0usize;
    for dy in -(radius as isize)..=radius as isize {
        for dx in -(radius as isize)..=radius as isize {
            if dy == 0 && dx == 0 {
                continue;
            }
            let oplane = &mut out[ci * h * w..(ci + 1) * h * w];
            for y in 0..h {
                let ny = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                for x in 0..w {
                    let nx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                    oplane[y * w + x] = if plane[ny * w + nx] > plane[y * w + x] {
                        1.0
                    } else {
                        -1.0
                    };
                }
            }
            ci += 1;
        }
    }
    Ok(Tensor::from_parts(vec![channels, h, w], out))
}

/// Winner-take-all argmax over the group-summed correlation volume.
pub fn wta_disparity(volume: &crate::cost_volume::CostVolume) -> DisparityMap {
    let (g, d4, h, w) = (
        volume.groups(),
        volume.hypotheses(),
        volume.height(),
        volume.width(),
    );
    let hw = h * w;
    let mut out = vec![0.0f32; hw];
    for (i, o) in out.iter_mut().enumerate() {
        let mut best = f64::NEG_INFINITY;
        let mut best_d = 0usize;
        for d in 0..d4 {
            let mut score = 0.0f64;
            for gi in 0..g {
                score += volume.data.data()[(gi * d4 + d) * hw + i] as f64;
            }
            if score > best {
                best = score;
                best_d = d;
            }
        }
        *o = best_d as f32;
    }
    DisparityMap::dense(Tensor::from_parts(vec![1, h, w], out), Resolution::Quarter)
        .expect("wta output is finite")
}

/// Downsamples a full-resolution mask to the quarter grid; a quarter pixel
/// is true only when all 16 covered pixels are true.
pub fn quarter_mask_all(mask: &Mask) -> Mask {
    let (h4, w4) = (mask.h / 4, mask.w / 4);
    let mut data = vec![true; h4 * w4];
    for y in 0..h4 {
        for x in 0..w4 {
            'block: for dy in 0..4 {
                for dx in 0..4 {
                    if !mask.get(y * 4 + dy, x * 4 + dx) {
                        data[y * w4 + x] = false;
                        break 'block;
                    }
                }
            }
        }
    }
    Mask {
        h: h4,
        w: w4,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost_volume::build_gwc_volume;

    fn full_map(values: Vec<f32>, h: usize, w: usize) -> DisparityMap {
        DisparityMap::dense(Tensor::from_parts(vec![1, h, w], values), Resolution::Full)
            .unwrap()
    }

    #[test]
    fn epe_exact_and_offset() {
        let gt = full_map(vec![1.0, 2.0, 3.0, 4.0], 2, 2);
        assert_eq!(epe(&gt, &gt, None).unwrap(), 0.0);
        let off = full_map(vec![4.0, 5.0, 6.0, 7.0], 2, 2);
        assert_eq!(epe(&off, &gt, None).unwrap(), 3.0);
    }

    #[test]
    fn epe_matches_loop_oracle_and_needs_valid_pixels() {
        let mut rng = SplitMix64::new(70);
        let pred_v: Vec<f32> = (0..20).map(|_| rng.next_unit() * 10.0).collect();
        let gt_v: Vec<f32> = (0..20).map(|_| rng.next_unit() * 10.0).collect();
        let pred = full_map(pred_v.clone(), 4, 5);
        let gt = full_map(gt_v.clone(), 4, 5);
        let want: f64 = pred_v
            .iter()
            .zip(gt_v.iter())
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum::<f64>()
            / 20.0;
        assert!((epe(&pred, &gt, None).unwrap() - want).abs() <= 1e-6);

        let empty = Mask {
            h: 4,
            w: 5,
            data: vec![false; 20],
        };
        assert!(matches!(
            epe(&pred, &gt, Some(&empty)),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn bad_ratio_thresholds() {
        let gt = full_map(vec![0.0; 8], 2, 4);
        assert_eq!(bad_ratio(&gt, &gt, 1.0, None).unwrap(), 0.0);
        let off = full_map(vec![3.5; 8], 2, 4);
        assert_eq!(bad_ratio(&off, &gt, 3.0, None).unwrap(), 1.0);
        assert_eq!(bad_ratio(&off, &gt, 4.0, None).unwrap(), 0.0);

        let mut half = vec![0.0f32; 8];
        for v in half.iter_mut().take(4) {
            *v = 10.0;
        }
        let halfmap = full_map(half, 2, 4);
        assert_eq!(bad_ratio(&halfmap, &gt, 3.0, None).unwrap(), 0.5);
    }

    #[test]
    fn bad_ratio_monotone_in_threshold() {
        let mut rng = SplitMix64::new(71);
        let pred = full_map((0..40).map(|_| rng.next_unit() * 8.0).collect(), 5, 8);
        let gt = full_map((0..40).map(|_| rng.next_unit() * 8.0).collect(), 5, 8);
        let mut prev = 1.0f64;
        for t in [0.5, 1.0, 2.0, 3.0, 5.0] {
            let b = bad_ratio(&pred, &gt, t, None).unwrap();
            assert!(b <= prev + 1e-12);
            prev = b;
        }
    }

    #[test]
    fn sequence_loss_reference_cases() {
        let gt = full_map(vec![5.0; 6], 2, 3);
        // exact predictions -> 0
        assert_eq!(
            sequence_loss(&gt, &[gt.clone(), gt.clone()], &gt, 0.9, 1.0).unwrap(),
            0.0
        );
        // unit error everywhere, two iterates: 0.5 + 0.9 + 1.0 = 2.4
        let off = full_map(vec![6.0; 6], 2, 3);
        let loss =
            sequence_loss(&off, &[off.clone(), off.clone()], &gt, 0.9, 1.0).unwrap();
        assert!((loss - 2.4).abs() <= 1e-9, "{loss}");
        // gamma = 1, N equal errors: 0.5 e^2 + N e for e < 1
        let e = 0.25f32;
        let small = full_map(vec![5.0 + e; 6], 2, 3);
        let loss = sequence_loss(
            &small,
            &[small.clone(), small.clone(), small.clone()],
            &gt,
            1.0,
            1.0,
        )
        .unwrap();
        let want = 0.5 * (e as f64) * (e as f64) + 3.0 * e as f64;
        assert!((loss - want).abs() <= 1e-7);
        // N = 0 reduces to the smooth-L1 term alone
        let loss = sequence_loss(&off, &[], &gt, 0.9, 1.0).unwrap();
        assert!((loss - 0.5).abs() <= 1e-9);
    }

    #[test]
    fn stereogram_zero_disparity_is_identical_pair() {
        let scene = generate_stereogram(
            16,
            32,
            &[PlaneSpec {
                rect: None,
                disparity: PlaneDisparity::Constant(0.0),
            }],
            9,
        )
        .unwrap();
        assert_eq!(scene.pair.left.data(), scene.pair.right.data());
        assert_eq!(scene.occlusion.count_true(), 0);
    }

    #[test]
    fn stereogram_warp_identity_holds() {
        let scene = generate_stereogram(
            32,
            64,
            &[
                PlaneSpec {
                    rect: None,
                    disparity: PlaneDisparity::Constant(8.0),
                },
                PlaneSpec {
                    rect: Some([40, 8, 56, 24]),
                    disparity: PlaneDisparity::Constant(16.0),
                },
            ],
            10,
        )
        .unwrap();
        for y in 0..32 {
            for x in 0..64 {
                if !scene.occlusion.get(y, x) {
                    let d = scene.gt.get(y, x) as usize;
                    for c in 0..3 {
                        assert_eq!(
                            scene.pair.right.at3(c, y, x - d),
                            scene.pair.left.at3(c, y, x),
                            "warp identity broken at ({y},{x})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn stereogram_two_plane_occlusion_band() {
        // far plane 8 everywhere, near plane 16 in a rectangle: the far
        // pixels in [x0-8, x0) of the near rect's rows become occluded
        let x0 = 40usize;
        let scene = generate_stereogram(
            32,
            64,
            &[
                PlaneSpec {
                    rect: None,
                    disparity: PlaneDisparity::Constant(8.0),
                },
                PlaneSpec {
                    rect: Some([x0, 8, 56, 24]),
                    disparity: PlaneDisparity::Constant(16.0),
                },
            ],
            11,
        )
        .unwrap();
        for y in 8..24 {
            for x in x0 - 8..x0 {
                assert!(scene.occlusion.get(y, x), "({y},{x}) should be occluded");
            }
            // just left of the band the far plane is visible
            assert!(!scene.occlusion.get(y, x0 - 9));
        }
    }

    #[test]
    fn stereogram_rejects_bad_specs() {
        // non-integer disparity
        assert!(matches!(
            generate_stereogram(
                16,
                16,
                &[PlaneSpec {
                    rect: None,
                    disparity: PlaneDisparity::Constant(2.5),
                }],
                1,
            ),
            Err(Error::SceneSpec(_))
        ));
        // out-of-range disparity
        assert!(matches!(
            generate_stereogram(
                16,
                16,
                &[PlaneSpec {
                    rect: None,
                    disparity: PlaneDisparity::Constant(20.0),
                }],
                1,
            ),
            Err(Error::SceneSpec(_))
        ));
        // rect outside the image
        assert!(matches!(
            generate_stereogram(
                16,
                16,
                &[PlaneSpec {
                    rect: Some([0, 0, 17, 16]),
                    disparity: PlaneDisparity::Constant(0.0),
                }],
                1,
            ),
            Err(Error::SceneSpec(_))
        ));
    }

    #[test]
    fn census_wta_recovers_constant_disparity() {
        let scene = generate_stereogram(
            64,
            128,
            &[PlaneSpec {
                rect: None,
                disparity: PlaneDisparity::Constant(8.0),
            }],
            42,
        )
        .unwrap();
        let gl = block_mean_downsample(&to_grayscale(&scene.pair.left), 4).unwrap();
        let gr = block_mean_downsample(&to_grayscale(&scene.pair.right), 4).unwrap();
        let fl = census_features(&gl, 2).unwrap();
        let fr = census_features(&gr, 2).unwrap();
        assert_eq!(fl.shape()[0], 24);
        let vol = build_gwc_volume(&fl, &fr, 12, 8).unwrap();
        let wta = wta_disparity(&vol);
        let noc4 = quarter_mask_all(&scene.noc_mask());
        let mut hits = 0usize;
        let mut total = 0usize;
        for y in 0..16 {
            for x in 0..32 {
                if noc4.get(y, x) {
                    total += 1;
                    if wta.get(y, x) == 2.0 {
                        hits += 1;
                    }
                }
            }
        }
        assert!(total > 100);
        let rate = hits as f64 / total as f64;
        assert!(rate > 0.95, "WTA recovery rate {rate}");
    }

    #[test]
    fn upscale_quarter_scales_values_by_four() {
        let d = DisparityMap::dense(
            Tensor::from_parts(vec![1, 2, 2], vec![1.0, 1.0, 1.0, 1.0]),
            Resolution::Quarter,
        )
        .unwrap();
        let up = upscale_quarter_map(&d).unwrap();
        assert_eq!(up.values.shape(), &[1, 8, 8]);
        assert!(up.values.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn report_serializes_documented_shape() {
        let gt = full_map(vec![1.0; 4], 2, 2);
        let report = metric_report(&gt, &gt, &[1.0, 2.0, 3.0], None, "all").unwrap();
        let json = serde_json::to_value(&report).unwrap();
        assert!(json.get("epe").is_some());
        assert!(json["bad"].get("1.0").is_some());
        assert!(json["bad"].get("3.0").is_some());
        assert_eq!(json["region"], "all");
        assert_eq!(json["n_valid"], 4);
    }
}
