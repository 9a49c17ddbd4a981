//! JSON run configuration with a validating loader.
//!
//! Every knob of the pipeline lives here; all randomness flows from the
//! single `seed`. Defaults: 8 refinement iterations, 8 correlation groups,
//! 48 quarter-resolution disparity hypotheses (192 at full resolution),
//! decay factor 0.9 for the sequence loss.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-scale feature channel counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub c2: usize,
    pub c4: usize,
    pub c8: usize,
    pub c16: usize,
}

impl Default for ChannelPlan {
    fn default() -> Self {
        Self {
            c2: 32,
            c4: 48,
            c8: 64,
            c16: 96,
        }
    }
}

impl ChannelPlan {
    pub fn at_scale(&self, scale: usize) -> Option<usize> {
        match scale {
            2 => Some(self.c2),
            4 => Some(self.c4),
            8 => Some(self.c8),
            16 => Some(self.c16),
            _ => None,
        }
    }
}

/// Where depth features come from: the built-in seeded extractor or a
/// feature-pyramid container on disk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSource {
    #[default]
    Builtin,
    Files,
}

/// Weight bundle flavor. `Seeded` draws everything from the seed;
/// `MatchingCore` additionally routes the correlation signal straight
/// through aggregation and scoring (identity fusion, cost passthrough,
/// averaging score head, zero residual decode) so the untrained pipeline
/// behaves like its matching core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightsPreset {
    #[default]
    Seeded,
    MatchingCore,
}

/// Input/output paths used by the CLI; all optional so configs can be
/// partial and overridden by flags.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IoPaths {
    pub left: Option<String>,
    pub right: Option<String>,
    pub out: Option<String>,
    pub gt: Option<String>,
    pub mask: Option<String>,
    pub depth_features: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Quarter-resolution disparity hypothesis count.
    pub d_max4: usize,
    /// Refinement iterations at inference.
    pub iters: usize,
    /// Pooled regional-center grid side.
    pub s: usize,
    pub k_small: usize,
    pub k_large: usize,
    /// Correlation / aggregation group count.
    pub groups: usize,
    pub channels: ChannelPlan,
    /// GRU hidden state channels.
    pub hidden: usize,
    /// Disparity encoder output channels.
    pub encode_channels: usize,
    /// Depth-aware features are projected to `groups * fda_proj_factor`
    /// channels before entering the dynamic convolution.
    pub fda_proj_factor: usize,
    /// Geometry lookup radius along the disparity axis.
    pub lookup_radius: usize,
    /// Sequence-loss decay factor.
    pub gamma: f64,
    /// Score gain applied by the matching-core preset's averaging head.
    pub score_gain: f32,
    pub feature_source: FeatureSource,
    pub preset: WeightsPreset,
    pub threads: Option<usize>,
    pub paths: IoPaths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            d_max4: 48,
            iters: 8,
            s: 8,
            k_small: 3,
            k_large: 7,
            groups: 8,
            channels: ChannelPlan::default(),
            hidden: 64,
            encode_channels: 16,
            fda_proj_factor: 2,
            lookup_radius: 4,
            gamma: 0.9,
            score_gain: 16384.0,
            feature_source: FeatureSource::Builtin,
            preset: WeightsPreset::Seeded,
            threads: None,
            paths: IoPaths::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_max4 < 1 {
            return Err(Error::Config("d_max4 must be >= 1".into()));
        }
        if self.k_small.is_multiple_of(2) || self.k_large.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel sizes must be odd, got {} and {}",
                self.k_small, self.k_large
            )));
        }
        if self.groups == 0 {
            return Err(Error::Config("groups must be >= 1".into()));
        }
        let plan = &self.channels;
        for (name, c) in [
            ("c2", plan.c2),
            ("c4", plan.c4),
            ("c8", plan.c8),
            ("c16", plan.c16),
            ("hidden", self.hidden),
            ("encode_channels", self.encode_channels),
        ] {
            if c == 0 || !c.is_multiple_of(self.groups) {
                return Err(Error::Config(format!(
                    "channel count {name}={c} must be a positive multiple of groups={}",
                    self.groups
                )));
            }
        }
        if self.s == 0 {
            return Err(Error::Config("pool grid side s must be >= 1".into()));
        }
        if self.fda_proj_factor == 0 {
            return Err(Error::Config("fda_proj_factor must be >= 1".into()));
        }
        if !(0.0 < self.gamma && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "gamma must be in (0,1], got {}",
                self.gamma
            )));
        }
        if let Some(t) = self.threads {
            if t == 0 {
                return Err(Error::Config("threads must be >= 1".into()));
            }
        }
        Ok(())
    }

    /// Loads and validates a JSON config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
