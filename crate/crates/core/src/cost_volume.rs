//! Group-wise correlation volume at quarter resolution.
//!
//! `C(g,d,y,x) = (N_g/N_c) * <f_l^g(y,x), f_r^g(y,x-d)>` over channel group
//! g, with exact zeros wherever the shifted column `x - d` falls outside the
//! image. Hypotheses are independent, so construction parallelizes over the
//! disparity index.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeKind {
    Raw,
    Aggregated,
}

/// 4-D cost volume stored `[G, D4, H4, W4]`.
#[derive(Debug, Clone)]
pub struct CostVolume {
    pub data: Tensor,
    pub kind: VolumeKind,
}

impl CostVolume {
    pub fn groups(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn hypotheses(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn height(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[3]
    }

    /// Copies disparity slice `d` out as a `[G, H4, W4]` tensor.
    pub fn slice(&self, d: usize) -> Tensor {
        let (g, d4, h, w) = (
            self.groups(),
            self.hypotheses(),
            self.height(),
            self.width(),
        );
        let hw = h * w;
        let mut out = Vec::with_capacity(g * hw);
        for gi in 0..g {
            out.extend_from_slice(&self.data.data()[(gi * d4 + d) * hw..(gi * d4 + d + 1) * hw]);
        }
        Tensor::from_parts(vec![g, h, w], out)
    }

    pub fn at(&self, g: usize, d: usize, y: usize, x: usize) -> f32 {
        self.data.at4(g, d, y, x)
    }
}

fn check_features(f_l4: &Tensor, f_r4: &Tensor, d_max4: usize, groups: usize) -> Result<()> {
    if f_l4.rank() != 3 || f_r4.rank() != 3 || f_l4.shape() != f_r4.shape() {
        return Err(Error::Dimension(format!(
            "correlation features must be matching [C,H,W] tensors, got {:?} and {:?}",
            f_l4.shape(),
            f_r4.shape()
        )));
    }
    if groups == 0 || !f_l4.shape()[0].is_multiple_of(groups) {
        return Err(Error::Config(format!(
            "{} feature channels not divisible by {groups} groups",
            f_l4.shape()[0]
        )));
    }
    if d_max4 < 1 {
        return Err(Error::Config("d_max4 must be >= 1".into()));
    }
    Ok(())
}

/// Builds the group-wise correlation volume over `d_max4` hypotheses.
pub fn build_gwc_volume(
    f_l4: &Tensor,
    f_r4: &Tensor,
    d_max4: usize,
    groups: usize,
) -> Result<CostVolume> {
    check_features(f_l4, f_r4, d_max4, groups)?;
    let (n_c, h, w) = (f_l4.shape()[0], f_l4.shape()[1], f_l4.shape()[2]);
    let per_group = n_c / groups;
    let scale = groups as f64 / n_c as f64;
    let hw = h * w;

    // Pixel-major copies make every group dot product a contiguous slice.
    let left = to_pixel_major(f_l4);
    let right = to_pixel_major(f_r4);

    let slabs: Vec<Vec<f32>> = (0..d_max4)
        .into_par_iter()
        .map(|d| {
            let mut slab = vec![0.0f32; groups * hw];
            for y in 0..h {
                for x in d..w {
                    let lp = &left[(y * w + x) * n_c..(y * w + x + 1) * n_c];
                    let rp = &right[(y * w + x - d) * n_c..(y * w + x - d + 1) * n_c];
                    for g in 0..groups {
                        let mut acc = 0.0f64;
                        for c in g * per_group..(g + 1) * per_group {
                            acc += lp[c] as f64 * rp[c] as f64;
                        }
                        slab[g * hw + y * w + x] = (scale * acc) as f32;
                    }
                }
            }
            slab
        })
        .collect();

    let mut out = vec![0.0f32; groups * d_max4 * hw];
    for (d, slab) in slabs.into_iter().enumerate() {
        for g in 0..groups {
            out[(g * d_max4 + d) * hw..(g * d_max4 + d + 1) * hw]
                .copy_from_slice(&slab[g * hw..(g + 1) * hw]);
        }
    }
    Ok(CostVolume {
        data: Tensor::from_parts(vec![groups, d_max4, h, w], out),
        kind: VolumeKind::Raw,
    })
}

/// Literal per-element evaluation of the correlation definition; reference
/// for tests and the benchmark harness.
pub fn gwc_volume_oracle(
    f_l4: &Tensor,
    f_r4: &Tensor,
    d_max4: usize,
    groups: usize,
) -> Result<CostVolume> {
    check_features(f_l4, f_r4, d_max4, groups)?;
    let (n_c, h, w) = (f_l4.shape()[0], f_l4.shape()[1], f_l4.shape()[2]);
    let per_group = n_c / groups;
    let scale = groups as f64 / n_c as f64;
    let mut out = vec![0.0f32; groups * d_max4 * h * w];
    for g in 0..groups {
        for d in 0..d_max4 {
            for y in 0..h {
                for x in 0..w {
                    let v = if x < d {
                        0.0
                    } else {
                        let mut acc = 0.0f64;
                        for c in 0..per_group {
                            acc += f_l4.at3(g * per_group + c, y, x) as f64
                                * f_r4.at3(g * per_group + c, y, x - d) as f64;
                        }
                        (scale * acc) as f32
                    };
                    out[((g * d_max4 + d) * h + y) * w + x] = v;
                }
            }
        }
    }
    Ok(CostVolume {
        data: Tensor::from_parts(vec![groups, d_max4, h, w], out),
        kind: VolumeKind::Raw,
    })
}

fn to_pixel_major(f: &Tensor) -> Vec<f32> {
    let (c, h, w) = (f.shape()[0], f.shape()[1], f.shape()[2]);
    let mut out = vec![0.0f32; c * h * w];
    for ci in 0..c {
        let plane = f.plane(ci);
        for (p, &v) in plane.iter().enumerate() {
            out[p * c + ci] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn random_tensor(shape: &[usize], rng: &mut SplitMix64) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), (0..n).map(|_| rng.next_symmetric(1.0)).collect())
    }

    #[test]
    fn all_ones_features_give_unit_correlation_at_zero() {
        let f = Tensor::filled(&[16, 4, 6], 1.0);
        let vol = build_gwc_volume(&f, &f, 3, 8).unwrap();
        // (8/16) * <ones_2, ones_2> = 0.5 * 2 = 1.0
        for g in 0..8 {
            for y in 0..4 {
                for x in 0..6 {
                    assert_eq!(vol.at(g, 0, y, x), 1.0);
                }
            }
        }
    }

    #[test]
    fn out_of_range_hypotheses_are_exact_zero() {
        let mut rng = SplitMix64::new(20);
        let f_l = random_tensor(&[8, 3, 5], &mut rng);
        let f_r = random_tensor(&[8, 3, 5], &mut rng);
        let vol = build_gwc_volume(&f_l, &f_r, 5, 8).unwrap();
        for g in 0..8 {
            for d in 0..5 {
                for y in 0..3 {
                    for x in 0..d.min(5) {
                        assert_eq!(vol.at(g, d, y, x), 0.0);
                    }
                }
            }
        }
        // column 1 at d = 3 specifically
        for g in 0..8 {
            for y in 0..3 {
                assert_eq!(vol.at(g, 3, y, 1), 0.0);
            }
        }
    }

    #[test]
    fn fast_path_matches_oracle() {
        let mut rng = SplitMix64::new(21);
        for trial in 0..50 {
            let c = [8, 16][trial % 2];
            let h = 2 + trial % 6;
            let w = 3 + trial % 6;
            let d4 = 1 + trial % w;
            let f_l = random_tensor(&[c, h, w], &mut rng);
            let f_r = random_tensor(&[c, h, w], &mut rng);
            let fast = build_gwc_volume(&f_l, &f_r, d4, 8).unwrap();
            let slow = gwc_volume_oracle(&f_l, &f_r, d4, 8).unwrap();
            for (a, b) in fast.data.data().iter().zip(slow.data.data().iter()) {
                assert!(
                    (a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1.0),
                    "trial {trial}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn self_correlation_is_nonnegative_squared_norm() {
        let mut rng = SplitMix64::new(22);
        let f = random_tensor(&[16, 4, 5], &mut rng);
        let vol = build_gwc_volume(&f, &f, 2, 8).unwrap();
        for g in 0..8 {
            for y in 0..4 {
                for x in 0..5 {
                    let mut norm = 0.0f64;
                    for c in g * 2..(g + 1) * 2 {
                        norm += (f.at3(c, y, x) as f64).powi(2);
                    }
                    let want = (0.5 * norm) as f32;
                    let got = vol.at(g, 0, y, x);
                    assert!(got >= 0.0);
                    assert!((got - want).abs() <= 1e-6 * want.max(1.0));
                }
            }
        }
    }

    #[test]
    fn shifting_right_features_moves_the_match() {
        let mut rng = SplitMix64::new(23);
        let w = 9;
        let f_l = random_tensor(&[8, 3, w], &mut rng);
        let f_r = f_l.clone();
        let k = 3usize;
        // shift right-image features left by k columns, zero fill at the end
        let mut shifted = vec![0.0f32; f_r.len()];
        for c in 0..8 {
            for y in 0..3 {
                for x in 0..w - k {
                    shifted[(c * 3 + y) * w + x] = f_r.at3(c, y, x + k);
                }
            }
        }
        let f_r_shift = Tensor::from_parts(vec![8, 3, w], shifted);
        let base = build_gwc_volume(&f_l, &f_r, 1, 8).unwrap();
        let moved = build_gwc_volume(&f_l, &f_r_shift, k + 1, 8).unwrap();
        for g in 0..8 {
            for y in 0..3 {
                for x in k..w {
                    assert_eq!(moved.at(g, k, y, x), base.at(g, 0, y, x));
                }
            }
        }
    }

    #[test]
    fn single_group_reduces_to_plain_normalized_correlation() {
        let mut rng = SplitMix64::new(24);
        let f_l = random_tensor(&[8, 3, 4], &mut rng);
        let f_r = random_tensor(&[8, 3, 4], &mut rng);
        let vol = gwc_volume_oracle(&f_l, &f_r, 2, 1).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                let mut acc = 0.0f64;
                for c in 0..8 {
                    acc += f_l.at3(c, y, x) as f64 * f_r.at3(c, y, x) as f64;
                }
                let want = (acc / 8.0) as f32;
                assert!((vol.at(0, 0, y, x) - want).abs() <= 1e-6 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_features_give_zero_volume() {
        let f = Tensor::zeros(&[8, 3, 4]);
        for vol in [
            build_gwc_volume(&f, &f, 3, 8).unwrap(),
            gwc_volume_oracle(&f, &f, 3, 8).unwrap(),
        ] {
            assert!(vol.data.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn rejects_indivisible_channels() {
        let f = Tensor::zeros(&[6, 2, 2]);
        assert!(matches!(
            build_gwc_volume(&f, &f, 1, 8),
            Err(Error::Config(_))
        ));
    }
}
