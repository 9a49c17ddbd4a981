//! Named, seeded parameter bundle for every static layer in the pipeline.
//!
//! Each parameter tensor is drawn uniformly from `[-a, a]` with
//! `a = sqrt(1/fan_in)` out of its own named splitmix64 stream
//! (`seed ^ fnv1a64(name)`), so bundles are reproducible from the config
//! seed alone and individual layers can be re-derived in isolation.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::io::config::{RunConfig, WeightsPreset};
use crate::rng::SplitMix64;
use crate::tensor::{KernelBank, Tensor};

/// Dense affine map `y = W x + b` with `W: [out, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Vec<f32>,
}

impl Linear {
    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }
}

#[derive(Debug, Clone)]
pub struct ModelWeights {
    /// Texture encoder stages (shared by left and right), stride-2 3x3.
    pub texture_stages: Vec<KernelBank>,
    /// Depth encoder stages, same geometry as texture but independent.
    pub depth_stages: Vec<KernelBank>,
    /// Per-scale 1x1 fusion of concatenated texture+depth features.
    pub scf: BTreeMap<usize, KernelBank>,
    /// 1x1 projection of a cost slice to the query channels.
    pub w_q: KernelBank,
    /// 1x1 projection of pooled depth-aware centers to the key channels.
    pub w_k: KernelBank,
    /// Affinity-to-kernel maps for the small and large branches.
    pub w_m_small: Linear,
    pub w_m_large: Linear,
    /// 1x1 projection of depth-aware features joined to each cost slice.
    pub fda_proj: KernelBank,
    /// 1x1 projection of the aggregated slice back to `groups` channels.
    pub agg_out: KernelBank,
    /// 1x1 reduction of group channels to one matching score.
    pub score: KernelBank,
    /// 1x1 hidden-state initializer from depth-aware features.
    pub hidden_init: KernelBank,
    /// Two-layer 3x3 disparity encoder.
    pub encode1: KernelBank,
    pub encode2: KernelBank,
    /// GRU gate convolutions over [hidden, input].
    pub gru_z: KernelBank,
    pub gru_r: KernelBank,
    pub gru_h: KernelBank,
    /// Two-layer 3x3 residual disparity decoder.
    pub decode1: KernelBank,
    pub decode2: KernelBank,
    /// Upsampling feature path and the 9-channel weight head.
    pub up1: KernelBank,
    pub up2: KernelBank,
    pub up_head: KernelBank,
}

fn draw(rng: &mut SplitMix64, n: usize, bound: f32) -> Vec<f32> {
    (0..n).map(|_| rng.next_symmetric(bound)).collect()
}

fn seeded_conv(
    seed: u64,
    name: &str,
    c_out: usize,
    c_in: usize,
    k: usize,
) -> Result<KernelBank> {
    let fan_in = (c_in * k * k) as f32;
    let bound = (1.0 / fan_in).sqrt();
    let mut wr = SplitMix64::for_name(seed, &format!("{name}.weight"));
    let weight = Tensor::new(&[c_out, c_in, k, k], draw(&mut wr, c_out * c_in * k * k, bound))?;
    let mut br = SplitMix64::for_name(seed, &format!("{name}.bias"));
    KernelBank::new(weight, draw(&mut br, c_out, bound))
}

fn seeded_linear(seed: u64, name: &str, out: usize, inp: usize) -> Result<Linear> {
    let bound = (1.0 / inp as f32).sqrt();
    let mut wr = SplitMix64::for_name(seed, &format!("{name}.weight"));
    let weight = Tensor::new(&[out, inp], draw(&mut wr, out * inp, bound))?;
    let mut br = SplitMix64::for_name(seed, &format!("{name}.bias"));
    Ok(Linear {
        weight,
        bias: draw(&mut br, out, bound),
    })
}

/// 1x1 bank that copies input channels `[offset, offset+c_out)` and ignores
/// the rest.
fn selector_conv(c_out: usize, c_in: usize, offset: usize) -> KernelBank {
    let mut w = vec![0.0f32; c_out * c_in];
    for o in 0..c_out {
        w[o * c_in + offset + o] = 1.0;
    }
    KernelBank::new(
        Tensor::from_parts(vec![c_out, c_in, 1, 1], w),
        vec![0.0; c_out],
    )
    .expect("selector bank is well-formed")
}

impl ModelWeights {
    /// Draws the full bundle from the config seed, then applies the
    /// configured preset.
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let mut w = Self::seeded(cfg)?;
        if cfg.preset == WeightsPreset::MatchingCore {
            w.apply_centered_texture();
            w.apply_identity_fusion(cfg);
            w.apply_cost_passthrough(cfg);
            w.apply_score_average(cfg, cfg.score_gain);
            w.apply_zero_decode();
        }
        Ok(w)
    }

    pub fn seeded(cfg: &RunConfig) -> Result<Self> {
        let s = cfg.seed;
        let plan = &cfg.channels;
        let stage_chans = [3, plan.c2, plan.c4, plan.c8, plan.c16];
        let mut texture_stages = Vec::new();
        let mut depth_stages = Vec::new();
        for i in 0..4 {
            texture_stages.push(seeded_conv(
                s,
                &format!("texture.stage{i}"),
                stage_chans[i + 1],
                stage_chans[i],
                3,
            )?);
            depth_stages.push(seeded_conv(
                s,
                &format!("depth.stage{i}"),
                stage_chans[i + 1],
                stage_chans[i],
                3,
            )?);
        }
        let mut scf = BTreeMap::new();
        for scale in [4usize, 8, 16] {
            let c = plan.at_scale(scale).unwrap();
            scf.insert(scale, seeded_conv(s, &format!("scf.scale{scale}"), c, 2 * c, 1)?);
        }
        let g = cfg.groups;
        let c4 = plan.c4;
        let proj = g * cfg.fda_proj_factor;
        let conv_in = g + proj;
        let enc = cfg.encode_channels;
        let gru_in = cfg.hidden + enc + (2 * cfg.lookup_radius + 1) * g;
        Ok(Self {
            texture_stages,
            depth_stages,
            scf,
            w_q: seeded_conv(s, "ddca.w_q", c4, g, 1)?,
            w_k: seeded_conv(s, "ddca.w_k", c4, c4, 1)?,
            w_m_small: seeded_linear(s, "ddca.w_m_small", cfg.k_small * cfg.k_small, cfg.s * cfg.s)?,
            w_m_large: seeded_linear(s, "ddca.w_m_large", cfg.k_large * cfg.k_large, cfg.s * cfg.s)?,
            fda_proj: seeded_conv(s, "ddca.fda_proj", proj, c4, 1)?,
            agg_out: seeded_conv(s, "ddca.agg_out", g, conv_in, 1)?,
            score: seeded_conv(s, "ddca.score", 1, g, 1)?,
            hidden_init: seeded_conv(s, "refine.hidden_init", cfg.hidden, c4, 1)?,
            encode1: seeded_conv(s, "refine.encode1", enc, 1, 3)?,
            encode2: seeded_conv(s, "refine.encode2", enc, enc, 3)?,
            gru_z: seeded_conv(s, "refine.gru_z", cfg.hidden, gru_in, 3)?,
            gru_r: seeded_conv(s, "refine.gru_r", cfg.hidden, gru_in, 3)?,
            gru_h: seeded_conv(s, "refine.gru_h", cfg.hidden, gru_in, 3)?,
            decode1: seeded_conv(s, "refine.decode1", 32, cfg.hidden, 3)?,
            decode2: seeded_conv(s, "refine.decode2", 1, 32, 3)?,
            up1: seeded_conv(s, "upsample.up1", 32, cfg.hidden, 3)?,
            up2: seeded_conv(s, "upsample.up2", 32, 32 + plan.c2, 3)?,
            up_head: seeded_conv(s, "upsample.head", 9, 32, 1)?,
        })
    }

    /// SCF selects the texture channels verbatim, so fused features equal
    /// the texture pyramid.
    pub fn apply_identity_fusion(&mut self, cfg: &RunConfig) {
        for scale in [4usize, 8, 16] {
            let c = cfg.channels.at_scale(scale).unwrap();
            self.scf.insert(scale, selector_conv(c, 2 * c, 0));
        }
    }

    /// The aggregation output projection passes the aggregated cost
    /// channels through unchanged and drops the feature channels.
    pub fn apply_cost_passthrough(&mut self, cfg: &RunConfig) {
        let conv_in = cfg.groups * (1 + cfg.fda_proj_factor);
        self.agg_out = selector_conv(cfg.groups, conv_in, 0);
    }

    /// Score head averages the group correlations with a fixed gain, which
    /// sharpens the soft-argmin distribution of the untrained volume.
    pub fn apply_score_average(&mut self, cfg: &RunConfig, gain: f32) {
        let g = cfg.groups;
        let w = vec![gain / g as f32; g];
        self.score = KernelBank::new(Tensor::from_parts(vec![1, g, 1, 1], w), vec![0.0])
            .expect("score bank is well-formed");
    }

    /// Centers every texture-stage kernel slice to zero sum and zeroes the
    /// biases. Centered kernels respond only to spatial variation, which
    /// strips the per-channel DC component that unnormalized correlation
    /// would otherwise reward at mismatched disparities.
    pub fn apply_centered_texture(&mut self) {
        for bank in &mut self.texture_stages {
            let shape = bank.weight.shape().to_vec();
            let k = shape[3];
            let mut data = bank.weight.data().to_vec();
            for slice in data.chunks_exact_mut(k * k) {
                let mean: f32 = slice.iter().sum::<f32>() / (k * k) as f32;
                slice.iter_mut().for_each(|v| *v -= mean);
            }
            bank.weight = Tensor::from_parts(shape, data);
            bank.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    /// Residual decode emits exactly zero, freezing the disparity across
    /// iterations.
    pub fn apply_zero_decode(&mut self) {
        for bank in [&mut self.decode1, &mut self.decode2] {
            let shape = bank.weight.shape().to_vec();
            let n = bank.weight.len();
            bank.weight = Tensor::from_parts(shape, vec![0.0; n]);
            bank.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    /// Zeroes the GRU gate convolutions (used by contraction tests).
    pub fn apply_zero_gru(&mut self) {
        for bank in [&mut self.gru_z, &mut self.gru_r, &mut self.gru_h] {
            let shape = bank.weight.shape().to_vec();
            let n = bank.weight.len();
            bank.weight = Tensor::from_parts(shape, vec![0.0; n]);
            bank.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }
}

/// Bound check shared by tests: every drawn value for `name` with the given
/// fan-in lies in `[-a, a]`.
pub fn init_bound(fan_in: usize) -> f32 {
    (1.0 / fan_in as f32).sqrt()
}

impl ModelWeights {
    /// Sanity check used by configuration errors: the bundle's shapes must
    /// be mutually consistent with the config it was built from.
    pub fn check_shapes(&self, cfg: &RunConfig) -> Result<()> {
        let g = cfg.groups;
        if self.w_q.c_in() != g || self.w_q.c_out() != cfg.channels.c4 {
            return Err(Error::Config("w_q shape inconsistent with config".into()));
        }
        if !self.w_q.c_out().is_multiple_of(g) {
            return Err(Error::Config(
                "query channels must divide into groups".into(),
            ));
        }
        if self.w_m_small.in_dim() != cfg.s * cfg.s
            || self.w_m_small.out_dim() != cfg.k_small * cfg.k_small
            || self.w_m_large.out_dim() != cfg.k_large * cfg.k_large
        {
            return Err(Error::Config("w_m shape inconsistent with config".into()));
        }
        Ok(())
    }
}
