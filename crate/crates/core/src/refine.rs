//! Iterative disparity refinement: GRU updates driven by geometry features
//! looked up from the aggregated volume, residual decoding, and depth-guided
//! convex upsampling back to full resolution.

use crate::cost_volume::{CostVolume, VolumeKind};
use crate::error::{Error, Result};
use crate::tensor::{concat_channels, Tensor};
use crate::weights::ModelWeights;

pub const LEAKY_SLOPE: f32 = 0.1;

/// Boolean pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub h: usize,
    pub w: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn all_true(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            data: vec![true; h * w],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.w + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.data[y * self.w + x] = v;
    }

    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Pointwise conjunction.
    pub fn and(&self, other: &Mask) -> Result<Mask> {
        if self.h != other.h || self.w != other.w {
            return Err(Error::Dimension(format!(
                "mask sizes disagree: {}x{} vs {}x{}",
                self.h, self.w, other.h, other.w
            )));
        }
        Ok(Mask {
            h: self.h,
            w: self.w,
            data: self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(a, b)| *a && *b)
                .collect(),
        })
    }

    pub fn not(&self) -> Mask {
        Mask {
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|b| !b).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Quarter,
    Full,
}

/// Disparity field with a validity mask. Quarter-resolution maps hold
/// quarter-pixel units; full-resolution maps hold pixels.
#[derive(Debug, Clone)]
pub struct DisparityMap {
    pub values: Tensor,
    pub valid: Mask,
    pub resolution: Resolution,
}

impl DisparityMap {
    pub fn from_values(values: Tensor, valid: Mask, resolution: Resolution) -> Result<Self> {
        if values.rank() != 3 || values.shape()[0] != 1 {
            return Err(Error::Dimension(format!(
                "disparity values must be [1,H,W], got {:?}",
                values.shape()
            )));
        }
        if values.shape()[1] != valid.h || values.shape()[2] != valid.w {
            return Err(Error::Dimension(
                "validity mask does not match disparity dimensions".into(),
            ));
        }
        for (i, &v) in values.data().iter().enumerate() {
            if valid.data[i] && !v.is_finite() {
                return Err(Error::Format(format!(
                    "non-finite disparity {v} at valid pixel {i}"
                )));
            }
        }
        Ok(Self {
            values,
            valid,
            resolution,
        })
    }

    pub fn dense(values: Tensor, resolution: Resolution) -> Result<Self> {
        let (h, w) = (values.shape()[1], values.shape()[2]);
        Self::from_values(values, Mask::all_true(h, w), resolution)
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values.at3(0, y, x)
    }

    /// Crops to the top-left `h x w` region.
    pub fn crop(&self, h: usize, w: usize) -> Result<DisparityMap> {
        if h > self.height() || w > self.width() {
            return Err(Error::Dimension(format!(
                "cannot crop {}x{} to {h}x{w}",
                self.height(),
                self.width()
            )));
        }
        let mut values = vec![0.0f32; h * w];
        let mut valid = vec![true; h * w];
        for y in 0..h {
            for x in 0..w {
                values[y * w + x] = self.get(y, x);
                valid[y * w + x] = self.valid.get(y, x);
            }
        }
        DisparityMap::from_values(
            Tensor::from_parts(vec![1, h, w], values),
            Mask { h, w, data: valid },
            self.resolution,
        )
    }
}

/// GRU hidden state plus iteration counter.
#[derive(Debug, Clone)]
pub struct GruState {
    pub h: Tensor,
    pub k: usize,
}

/// `h0 = tanh(conv1x1(f_da4))`, iteration counter zero.
pub fn init_hidden(f_da4: &Tensor, weights: &ModelWeights) -> Result<GruState> {
    let h = f_da4.conv2d(&weights.hidden_init, 1, 0)?.tanh();
    Ok(GruState { h, k: 0 })
}

/// Gathers `(2r+1)` disparity-interpolated slabs of the aggregated volume
/// around the current disparity. Channels are offset-major, group-minor;
/// positions outside `[0, D4-1]` contribute zero.
pub fn lookup_geometry(
    volume: &CostVolume,
    d: &DisparityMap,
    radius: usize,
) -> Result<Tensor> {
    if volume.kind != VolumeKind::Aggregated {
        return Err(Error::Config(
            "geometry lookup expects the aggregated volume".into(),
        ));
    }
    if d.resolution != Resolution::Quarter {
        return Err(Error::Config("geometry lookup expects quarter resolution".into()));
    }
    let (g, d4, h, w) = (
        volume.groups(),
        volume.hypotheses(),
        volume.height(),
        volume.width(),
    );
    if d.height() != h || d.width() != w {
        return Err(Error::Dimension(format!(
            "disparity {}x{} does not match volume {h}x{w}",
            d.height(),
            d.width()
        )));
    }
    let taps = 2 * radius + 1;
    let hw = h * w;
    let vol = volume.data.data();
    let mut out = vec![0.0f32; taps * g * hw];
    for (p, &dv) in d.values.data().iter().enumerate() {
        for oi in 0..taps {
            let pos = dv as f64 + oi as f64 - radius as f64;
            let lo = pos.floor();
            let t = pos - lo;
            let lo_in = lo >= 0.0 && lo <= (d4 - 1) as f64;
            let hi_in = lo + 1.0 >= 0.0 && lo + 1.0 <= (d4 - 1) as f64;
            for gi in 0..g {
                let base = gi * d4 * hw;
                let mut v = 0.0f64;
                if lo_in {
                    v += (1.0 - t) * vol[base + lo as usize * hw + p] as f64;
                }
                if hi_in {
                    v += t * vol[base + (lo + 1.0) as usize * hw + p] as f64;
                }
                out[(oi * g + gi) * hw + p] = v as f32;
            }
        }
    }
    Ok(Tensor::from_parts(vec![taps * g, h, w], out))
}

/// Two 3x3 conv layers over the unit-normalized disparity.
fn encode_disparity(d: &DisparityMap, d_max4: usize, weights: &ModelWeights) -> Result<Tensor> {
    let norm = d.values.scale(1.0 / d_max4 as f32);
    let e = norm
        .conv2d(&weights.encode1, 1, 1)?
        .leaky_relu(LEAKY_SLOPE)
        .conv2d(&weights.encode2, 1, 1)?
        .leaky_relu(LEAKY_SLOPE);
    Ok(e)
}

/// One gated recurrent update:
/// `z = sigma(Conv([h,x]))`, `r = sigma(Conv([h,x]))`,
/// `h~ = tanh(Conv([r*h, x]))`, `h' = (1-z)*h + z*h~`.
pub fn gru_step(
    state: &GruState,
    d: &DisparityMap,
    f_g: &Tensor,
    d_max4: usize,
    weights: &ModelWeights,
) -> Result<GruState> {
    let x = concat_channels(&[&encode_disparity(d, d_max4, weights)?, f_g])?;
    let hx = concat_channels(&[&state.h, &x])?;
    let z = hx.conv2d(&weights.gru_z, 1, 1)?.sigmoid();
    let r = hx.conv2d(&weights.gru_r, 1, 1)?.sigmoid();
    let rh = Tensor::from_parts(
        state.h.shape().to_vec(),
        r.data()
            .iter()
            .zip(state.h.data().iter())
            .map(|(a, b)| a * b)
            .collect(),
    );
    let rhx = concat_channels(&[&rh, &x])?;
    let cand = rhx.conv2d(&weights.gru_h, 1, 1)?.tanh();
    let h_next = Tensor::from_parts(
        state.h.shape().to_vec(),
        state
            .h
            .data()
            .iter()
            .zip(z.data().iter())
            .zip(cand.data().iter())
            .map(|((h, z), c)| (1.0 - z) * h + z * c)
            .collect(),
    );
    Ok(GruState {
        h: h_next,
        k: state.k + 1,
    })
}

/// Residual disparity: conv3x3 -> leaky rectifier -> conv3x3 over the
/// hidden state.
pub fn decode_delta(state: &GruState, weights: &ModelWeights) -> Result<Tensor> {
    state
        .h
        .conv2d(&weights.decode1, 1, 1)?
        .leaky_relu(LEAKY_SLOPE)
        .conv2d(&weights.decode2, 1, 1)
}

/// Runs `iters` refinement steps from `d0`, clamping each update into
/// `[0, D4-1]`. Returns every iterate and the final state.
pub fn refine_iterate(
    volume: &CostVolume,
    d0: &DisparityMap,
    f_da4: &Tensor,
    weights: &ModelWeights,
    iters: usize,
    radius: usize,
    d_max4: usize,
) -> Result<(Vec<DisparityMap>, GruState)> {
    let mut state = init_hidden(f_da4, weights)?;
    let mut current = d0.clone();
    let mut iterates = Vec::with_capacity(iters);
    let top = (d_max4 - 1) as f32;
    for _ in 0..iters {
        let f_g = lookup_geometry(volume, &current, radius)?;
        state = gru_step(&state, &current, &f_g, d_max4, weights)?;
        let delta = decode_delta(&state, weights)?;
        let values = Tensor::from_parts(
            current.values.shape().to_vec(),
            current
                .values
                .data()
                .iter()
                .zip(delta.data().iter())
                .map(|(d, dd)| (d + dd).clamp(0.0, top))
                .collect(),
        );
        current = DisparityMap::from_values(values, current.valid.clone(), Resolution::Quarter)?;
        iterates.push(current.clone());
    }
    Ok((iterates, state))
}

/// Depth-guided convex upsampling to full resolution: hidden-state features
/// are lifted to half resolution, joined with the scale-2 depth features,
/// expanded to a 9-channel softmax weight map at full resolution, and each
/// full-resolution pixel becomes `4 *` the weighted combination of its
/// parent cell's 3x3 quarter-resolution neighborhood (edge-replicated).
pub fn convex_upsample(
    d: &DisparityMap,
    state: &GruState,
    f_d2: &Tensor,
    weights: &ModelWeights,
) -> Result<DisparityMap> {
    if d.resolution != Resolution::Quarter {
        return Err(Error::Config("convex_upsample expects quarter resolution".into()));
    }
    let (h4, w4) = (d.height(), d.width());
    let (h2, w2) = (f_d2.shape()[1], f_d2.shape()[2]);
    if h2 != 2 * h4 || w2 != 2 * w4 {
        return Err(Error::Dimension(format!(
            "scale-2 features {h2}x{w2} do not match quarter grid {h4}x{w4}"
        )));
    }
    let (h, w) = (4 * h4, 4 * w4);

    let feat4 = state.h.conv2d(&weights.up1, 1, 1)?.leaky_relu(LEAKY_SLOPE);
    let feat2 = feat4.bilinear_resize(h2, w2)?;
    let joined = concat_channels(&[&feat2, f_d2])?;
    let mixed = joined.conv2d(&weights.up2, 1, 1)?.leaky_relu(LEAKY_SLOPE);
    let full = mixed.bilinear_resize(h, w)?;
    let logits = full.conv2d(&weights.up_head, 1, 0)?; // [9,H,W]

    let hw = h * w;
    let mut out = vec![0.0f32; hw];
    let dq = d.values.data();
    for y in 0..h {
        let qy = (y / 4) as isize;
        for x in 0..w {
            let qx = (x / 4) as isize;
            let i = y * w + x;
            // softmax over the 9 weight channels at this pixel
            let mut max = f32::NEG_INFINITY;
            for c in 0..9 {
                max = max.max(logits.data()[c * hw + i]);
            }
            let mut den = 0.0f64;
            let mut num = 0.0f64;
            let mut exps = [0.0f64; 9];
            for (c, e) in exps.iter_mut().enumerate() {
                *e = ((logits.data()[c * hw + i] - max) as f64).exp();
                den += *e;
            }
            for (c, &e) in exps.iter().enumerate() {
                let dy = (c / 3) as isize - 1;
                let dx = (c % 3) as isize - 1;
                let ny = (qy + dy).clamp(0, h4 as isize - 1) as usize;
                let nx = (qx + dx).clamp(0, w4 as isize - 1) as usize;
                num += e * dq[ny * w4 + nx] as f64;
            }
            out[i] = (4.0 * num / den) as f32;
        }
    }
    DisparityMap::dense(Tensor::from_parts(vec![1, h, w], out), Resolution::Full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::RunConfig;
    use crate::rng::SplitMix64;
    use crate::tensor::KernelBank;

    fn random_tensor(shape: &[usize], rng: &mut SplitMix64) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), (0..n).map(|_| rng.next_symmetric(1.0)).collect())
    }

    fn small_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.channels.c2 = 8;
        cfg.channels.c4 = 16;
        cfg.channels.c8 = 16;
        cfg.channels.c16 = 16;
        cfg.hidden = 16;
        cfg.encode_channels = 8;
        cfg.s = 4;
        cfg
    }

    fn quarter_map(values: Vec<f32>, h: usize, w: usize) -> DisparityMap {
        DisparityMap::dense(Tensor::from_parts(vec![1, h, w], values), Resolution::Quarter)
            .unwrap()
    }

    fn aggregated_volume(g: usize, d4: usize, h: usize, w: usize, rng: &mut SplitMix64) -> CostVolume {
        CostVolume {
            data: random_tensor(&[g, d4, h, w], rng),
            kind: VolumeKind::Aggregated,
        }
    }

    #[test]
    fn init_hidden_zero_features_zero_bias() {
        let cfg = small_cfg();
        let mut weights = ModelWeights::seeded(&cfg).unwrap();
        weights.hidden_init.bias.iter_mut().for_each(|b| *b = 0.0);
        let state = init_hidden(&Tensor::zeros(&[16, 4, 5]), &weights).unwrap();
        assert!(state.h.data().iter().all(|&v| v == 0.0));
        assert_eq!(state.k, 0);
    }

    #[test]
    fn init_hidden_bounded_and_deterministic() {
        let cfg = small_cfg();
        let weights = ModelWeights::seeded(&cfg).unwrap();
        let mut rng = SplitMix64::new(50);
        let f = random_tensor(&[16, 4, 5], &mut rng);
        let a = init_hidden(&f, &weights).unwrap();
        let b = init_hidden(&f, &weights).unwrap();
        assert_eq!(a.h, b.h);
        assert!(a.h.data().iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn lookup_integer_disparity_gathers_exact_slices() {
        let mut rng = SplitMix64::new(51);
        let vol = aggregated_volume(8, 6, 3, 4, &mut rng);
        let d = quarter_map(vec![2.0; 12], 3, 4);
        let f = lookup_geometry(&vol, &d, 1).unwrap();
        assert_eq!(f.shape(), &[3 * 8, 3, 4]);
        // center tap (offset 0) is slice 2 exactly
        for g in 0..8 {
            for y in 0..3 {
                for x in 0..4 {
                    assert_eq!(f.at3(8 + g, y, x), vol.at(g, 2, y, x));
                }
            }
        }
        // offset -1 is slice 1
        for g in 0..8 {
            assert_eq!(f.at3(g, 1, 1), vol.at(g, 1, 1, 1));
        }
    }

    #[test]
    fn lookup_out_of_range_is_zero() {
        let mut rng = SplitMix64::new(52);
        let vol = aggregated_volume(8, 4, 2, 3, &mut rng);
        let d = quarter_map(vec![0.0; 6], 2, 3);
        let f = lookup_geometry(&vol, &d, 1).unwrap();
        // offset -1 at disparity 0 falls below the range
        for g in 0..8 {
            for y in 0..2 {
                for x in 0..3 {
                    assert_eq!(f.at3(g, y, x), 0.0);
                }
            }
        }
    }

    #[test]
    fn lookup_fractional_matches_oracle() {
        let mut rng = SplitMix64::new(53);
        for _ in 0..20 {
            let vol = aggregated_volume(8, 6, 3, 4, &mut rng);
            let d_vals: Vec<f32> = (0..12).map(|_| rng.next_unit() * 5.0).collect();
            let d = quarter_map(d_vals, 3, 4);
            let fast = lookup_geometry(&vol, &d, 2).unwrap();
            let slow = crate::oracle::lookup_geometry_oracle(&vol.data, &d.values, 2);
            for (a, b) in fast.data().iter().zip(slow.data().iter()) {
                assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
            }
        }
        // the 2.5 case averages slices 2 and 3
        let vol = aggregated_volume(8, 6, 2, 2, &mut rng);
        let d = quarter_map(vec![2.5; 4], 2, 2);
        let f = lookup_geometry(&vol, &d, 0).unwrap();
        for g in 0..8 {
            let want = 0.5 * (vol.at(g, 2, 0, 0) as f64 + vol.at(g, 3, 0, 0) as f64) as f32;
            assert!((f.at3(g, 0, 0) - want).abs() <= 1e-6);
        }
    }

    #[test]
    fn gru_zero_weights_halve_the_state() {
        let cfg = small_cfg();
        let mut weights = ModelWeights::seeded(&cfg).unwrap();
        weights.apply_zero_gru();
        let mut rng = SplitMix64::new(54);
        let h0 = random_tensor(&[16, 3, 4], &mut rng).tanh();
        let state = GruState { h: h0.clone(), k: 0 };
        let d = quarter_map(vec![1.0; 12], 3, 4);
        let f_g = random_tensor(&[(2 * 4 + 1) * 8, 3, 4], &mut rng);
        let next = gru_step(&state, &d, &f_g, 48, &weights).unwrap();
        assert_eq!(next.k, 1);
        for (a, b) in next.h.data().iter().zip(h0.data().iter()) {
            assert!((a - 0.5 * b).abs() <= 1e-7);
        }
    }

    #[test]
    fn gru_saturated_update_gate_freezes_state() {
        let cfg = small_cfg();
        let mut weights = ModelWeights::seeded(&cfg).unwrap();
        // bias -> -30 saturates sigma(z) toward 0, so h' ~ h
        let shape = weights.gru_z.weight.shape().to_vec();
        let n = weights.gru_z.weight.len();
        weights.gru_z = KernelBank::new(Tensor::from_parts(shape, vec![0.0; n]), vec![-30.0; 16])
            .unwrap();
        let mut rng = SplitMix64::new(55);
        let h0 = random_tensor(&[16, 3, 4], &mut rng).tanh();
        let state = GruState { h: h0.clone(), k: 0 };
        let d = quarter_map(vec![3.0; 12], 3, 4);
        let f_g = random_tensor(&[(2 * 4 + 1) * 8, 3, 4], &mut rng);
        let next = gru_step(&state, &d, &f_g, 48, &weights).unwrap();
        for (a, b) in next.h.data().iter().zip(h0.data().iter()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn gru_state_stays_in_open_unit_interval() {
        let cfg = small_cfg();
        let weights = ModelWeights::seeded(&cfg).unwrap();
        let mut rng = SplitMix64::new(56);
        let mut state = GruState {
            h: random_tensor(&[16, 3, 4], &mut rng).tanh(),
            k: 0,
        };
        let d = quarter_map(vec![2.0; 12], 3, 4);
        for _ in 0..5 {
            let f_g = random_tensor(&[(2 * 4 + 1) * 8, 3, 4], &mut rng);
            state = gru_step(&state, &d, &f_g, 48, &weights).unwrap();
            assert!(state.h.data().iter().all(|&v| v > -1.0 && v < 1.0));
        }
        assert_eq!(state.k, 5);
    }

    #[test]
    fn decode_zero_state_zero_bias_is_zero() {
        let cfg = small_cfg();
        let mut weights = ModelWeights::seeded(&cfg).unwrap();
        weights.decode1.bias.iter_mut().for_each(|b| *b = 0.0);
        weights.decode2.bias.iter_mut().for_each(|b| *b = 0.0);
        let state = GruState {
            h: Tensor::zeros(&[16, 3, 4]),
            k: 0,
        };
        let delta = decode_delta(&state, &weights).unwrap();
        assert_eq!(delta.shape(), &[1, 3, 4]);
        assert!(delta.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn refine_zero_iters_and_zero_decode_fixed_point() {
        let cfg = small_cfg();
        let mut weights = ModelWeights::seeded(&cfg).unwrap();
        let mut rng = SplitMix64::new(57);
        let mut vol = aggregated_volume(8, 6, 3, 4, &mut rng);
        vol.kind = VolumeKind::Aggregated;
        let f_da = random_tensor(&[16, 3, 4], &mut rng);
        let d0 = quarter_map(vec![2.5; 12], 3, 4);

        let (iters, state) = refine_iterate(&vol, &d0, &f_da, &weights, 0, 4, 6).unwrap();
        assert!(iters.is_empty());
        assert_eq!(state.k, 0);

        weights.apply_zero_decode();
        let (iters, state) = refine_iterate(&vol, &d0, &f_da, &weights, 8, 4, 6).unwrap();
        assert_eq!(iters.len(), 8);
        assert_eq!(state.k, 8);
        for it in &iters {
            assert_eq!(it.values.data(), d0.values.data());
        }
    }

    #[test]
    fn refine_iterates_stay_in_hypothesis_range() {
        let cfg = small_cfg();
        let weights = ModelWeights::seeded(&cfg).unwrap();
        let mut rng = SplitMix64::new(58);
        let vol = aggregated_volume(8, 6, 3, 4, &mut rng);
        let f_da = random_tensor(&[16, 3, 4], &mut rng);
        let d0 = quarter_map(vec![5.0; 12], 3, 4);
        let (iters, _) = refine_iterate(&vol, &d0, &f_da, &weights, 6, 4, 6).unwrap();
        for it in &iters {
            assert!(it.values.data().iter().all(|&v| (0.0..=5.0).contains(&v)));
        }
    }

    #[test]
    fn upsample_constant_field_scales_by_four() {
        let cfg = small_cfg();
        let weights = ModelWeights::seeded(&cfg).unwrap();
        let mut rng = SplitMix64::new(59);
        let state = GruState {
            h: random_tensor(&[16, 3, 4], &mut rng).tanh(),
            k: 1,
        };
        let f_d2 = random_tensor(&[8, 6, 8], &mut rng);
        let d = quarter_map(vec![2.25; 12], 3, 4);
        let up = convex_upsample(&d, &state, &f_d2, &weights).unwrap();
        assert_eq!(up.values.shape(), &[1, 12, 16]);
        for &v in up.values.data() {
            assert!((v - 9.0).abs() <= 1e-5);
        }
    }

    #[test]
    fn upsample_one_hot_center_is_nearest_neighbor() {
        let cfg = small_cfg();
        let mut weights = ModelWeights::seeded(&cfg).unwrap();
        // head selects channel 4 (the center tap) with a huge margin
        let mut wdata = vec![0.0f32; 9 * 32];
        let bias: Vec<f32> = (0..9).map(|c| if c == 4 { 50.0 } else { 0.0 }).collect();
        weights.up_head =
            KernelBank::new(Tensor::from_parts(vec![9, 32, 1, 1], std::mem::take(&mut wdata)), bias)
                .unwrap();
        let mut rng = SplitMix64::new(60);
        let state = GruState {
            h: random_tensor(&[16, 2, 3], &mut rng).tanh(),
            k: 1,
        };
        let f_d2 = random_tensor(&[8, 4, 6], &mut rng);
        let dvals: Vec<f32> = (0..6).map(|i| i as f32).collect();
        let d = quarter_map(dvals.clone(), 2, 3);
        let up = convex_upsample(&d, &state, &f_d2, &weights).unwrap();
        for y in 0..8 {
            for x in 0..12 {
                let want = 4.0 * dvals[(y / 4) * 3 + x / 4];
                assert!((up.get(y, x) - want).abs() <= 1e-3);
            }
        }
    }

    #[test]
    fn upsample_respects_window_bounds() {
        let cfg = small_cfg();
        let weights = ModelWeights::seeded(&cfg).unwrap();
        let mut rng = SplitMix64::new(61);
        for _ in 0..10 {
            let state = GruState {
                h: random_tensor(&[16, 3, 4], &mut rng).tanh(),
                k: 1,
            };
            let f_d2 = random_tensor(&[8, 6, 8], &mut rng);
            let dvals: Vec<f32> = (0..12).map(|_| rng.next_unit() * 5.0).collect();
            let d = quarter_map(dvals.clone(), 3, 4);
            let up = convex_upsample(&d, &state, &f_d2, &weights).unwrap();
            for y in 0..12 {
                for x in 0..16 {
                    let (qy, qx) = (y / 4, x / 4);
                    let mut lo = f32::INFINITY;
                    let mut hi = f32::NEG_INFINITY;
                    for dy in -1i32..=1 {
                        for dx in -1i32..=1 {
                            let ny = (qy as i32 + dy).clamp(0, 2) as usize;
                            let nx = (qx as i32 + dx).clamp(0, 3) as usize;
                            lo = lo.min(dvals[ny * 4 + nx]);
                            hi = hi.max(dvals[ny * 4 + nx]);
                        }
                    }
                    let v = up.get(y, x);
                    assert!(v >= 4.0 * lo - 1e-4 && v <= 4.0 * hi + 1e-4);
                }
            }
        }
    }
}
