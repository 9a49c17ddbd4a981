//! Multi-cue feature extraction and selective channel fusion.
//!
//! Texture pyramids come from a seeded stack of stride-2 convolutions with
//! leaky rectifiers; depth pyramids use an independent stack of the same
//! geometry or are ingested from a feature-pyramid container on disk.
//! Fusion is a per-scale 1x1 convolution over the concatenated texture and
//! depth channels with no nonlinearity.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::config::ChannelPlan;
use crate::io::tensor_file;
use crate::refine::LEAKY_SLOPE;
use crate::tensor::{concat_channels, Tensor};
use crate::weights::ModelWeights;

/// Rectified image pair with values in `[0,1]`.
#[derive(Debug, Clone)]
pub struct StereoPair {
    pub left: Tensor,
    pub right: Tensor,
}

impl StereoPair {
    pub fn new(left: Tensor, right: Tensor) -> Result<Self> {
        for (name, img) in [("left", &left), ("right", &right)] {
            if img.rank() != 3 || img.shape()[0] != 3 {
                return Err(Error::Dimension(format!(
                    "{name} image must be [3,H,W], got {:?}",
                    img.shape()
                )));
            }
            if img.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Format(format!(
                    "{name} image values must lie in [0,1]"
                )));
            }
        }
        if left.shape() != right.shape() {
            return Err(Error::Dimension(format!(
                "stereo pair shapes disagree: {:?} vs {:?}",
                left.shape(),
                right.shape()
            )));
        }
        Ok(Self { left, right })
    }

    pub fn height(&self) -> usize {
        self.left.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.left.shape()[2]
    }

    /// Edge-replicate pads both images on the right/bottom so dimensions
    /// become multiples of `m`. Returns the padded pair and original size.
    pub fn pad_to_multiple(&self, m: usize) -> (StereoPair, (usize, usize)) {
        let (h, w) = (self.height(), self.width());
        let h2 = h.div_ceil(m) * m;
        let w2 = w.div_ceil(m) * m;
        if h2 == h && w2 == w {
            return (self.clone(), (h, w));
        }
        let pad = |img: &Tensor| {
            let mut data = vec![0.0f32; 3 * h2 * w2];
            for c in 0..3 {
                for y in 0..h2 {
                    let sy = y.min(h - 1);
                    for x in 0..w2 {
                        let sx = x.min(w - 1);
                        data[(c * h2 + y) * w2 + x] = img.at3(c, sy, sx);
                    }
                }
            }
            Tensor::from_parts(vec![3, h2, w2], data)
        };
        (
            StereoPair {
                left: pad(&self.left),
                right: pad(&self.right),
            },
            (h, w),
        )
    }
}

/// Which cue a pyramid carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cue {
    TextureLeft,
    TextureRight,
    Depth,
    DepthAware,
}

impl Cue {
    /// Scales this cue's pyramid must contain.
    pub fn scales(self) -> &'static [usize] {
        match self {
            Cue::Depth => &[2, 4, 8, 16],
            _ => &[4, 8, 16],
        }
    }
}

/// Per-scale feature maps for one cue.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    pub cue: Cue,
    levels: BTreeMap<usize, Tensor>,
}

impl FeaturePyramid {
    pub fn new(cue: Cue, levels: BTreeMap<usize, Tensor>) -> Result<Self> {
        for &scale in cue.scales() {
            if !levels.contains_key(&scale) {
                return Err(Error::Format(format!("missing level {scale}")));
            }
        }
        if levels.keys().any(|s| !cue.scales().contains(s)) {
            return Err(Error::Format(format!(
                "unexpected scales {:?} for cue {cue:?}",
                levels.keys().collect::<Vec<_>>()
            )));
        }
        Ok(Self { cue, levels })
    }

    pub fn level(&self, scale: usize) -> Result<&Tensor> {
        self.levels
            .get(&scale)
            .ok_or_else(|| Error::Format(format!("missing level {scale}")))
    }

    pub fn scales(&self) -> impl Iterator<Item = usize> + '_ {
        self.levels.keys().copied()
    }
}

/// Runs the seeded stride-2 convolution stack over one image and collects
/// the stage outputs into a pyramid. Channel counts follow the plan
/// (32/48/64/96 by default at scales 2/4/8/16).
pub fn extract_builtin_features(
    img: &Tensor,
    weights: &ModelWeights,
    cue: Cue,
) -> Result<FeaturePyramid> {
    if img.rank() != 3 || img.shape()[0] != 3 {
        return Err(Error::Dimension(format!(
            "expected [3,H,W] image, got {:?}",
            img.shape()
        )));
    }
    let (h, w) = (img.shape()[1], img.shape()[2]);
    if !h.is_multiple_of(16) || !w.is_multiple_of(16) {
        return Err(Error::Dimension(format!(
            "image {h}x{w} not divisible by 16; pad first"
        )));
    }
    let stages = match cue {
        Cue::TextureLeft | Cue::TextureRight => &weights.texture_stages,
        Cue::Depth => &weights.depth_stages,
        Cue::DepthAware => {
            return Err(Error::Config(
                "depth-aware features are produced by fusion, not extraction".into(),
            ))
        }
    };
    let mut levels = BTreeMap::new();
    let mut current = img.clone();
    for (i, bank) in stages.iter().enumerate() {
        current = current.conv2d(bank, 2, 1)?.leaky_relu(LEAKY_SLOPE);
        let scale = 2usize << i;
        if cue.scales().contains(&scale) {
            levels.insert(scale, current.clone());
        }
    }
    FeaturePyramid::new(cue, levels)
}

/// Fuses texture and depth pyramids per scale with the 1x1 selective
/// channel fusion layers. Spatial dimensions are preserved.
pub fn scf_fuse(
    texture: &FeaturePyramid,
    depth: &FeaturePyramid,
    weights: &ModelWeights,
) -> Result<FeaturePyramid> {
    let mut levels = BTreeMap::new();
    for &scale in Cue::DepthAware.scales() {
        let f_l = texture.level(scale)?;
        let f_d = depth.level(scale)?;
        if f_l.shape()[1..] != f_d.shape()[1..] {
            return Err(Error::Dimension(format!(
                "texture {:?} and depth {:?} disagree at scale {scale}",
                f_l.shape(),
                f_d.shape()
            )));
        }
        let bank = weights
            .scf
            .get(&scale)
            .ok_or_else(|| Error::Config(format!("no fusion weights for scale {scale}")))?;
        let joined = concat_channels(&[f_l, f_d])?;
        levels.insert(scale, joined.conv2d(bank, 1, 0)?);
    }
    FeaturePyramid::new(Cue::DepthAware, levels)
}

/// JSON manifest listing a pyramid's cue and per-level tensor files.
#[derive(Debug, Serialize, Deserialize)]
pub struct PyramidManifest {
    pub cue: Cue,
    pub scales: Vec<usize>,
    pub levels: BTreeMap<String, String>,
}

/// Writes a pyramid as a manifest plus one tensor container per level.
pub fn write_feature_pyramid(pyr: &FeaturePyramid, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut files = BTreeMap::new();
    for scale in pyr.scales() {
        let name = format!("level{scale}.tnsr");
        tensor_file::write_tensor(pyr.level(scale)?, &dir.join(&name))?;
        files.insert(scale.to_string(), name);
    }
    let manifest = PyramidManifest {
        cue: pyr.cue,
        scales: pyr.scales().collect(),
        levels: files,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Format(format!("manifest serialization: {e}")))?;
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

/// Expected geometry for an ingested pyramid: the padded base resolution
/// and per-scale channel counts.
#[derive(Debug, Clone, Copy)]
pub struct PyramidExpectation<'a> {
    pub cue: Cue,
    pub base_h: usize,
    pub base_w: usize,
    pub channels: &'a ChannelPlan,
}

/// Loads a pyramid from its manifest, validating cue, scales, level shapes,
/// and payload finiteness. `path` may be the manifest file or its directory.
pub fn load_feature_pyramid(
    path: &Path,
    expected: &PyramidExpectation<'_>,
) -> Result<FeaturePyramid> {
    let manifest_path = if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    };
    let dir = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let text = std::fs::read_to_string(&manifest_path)?;
    let manifest: PyramidManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("manifest {}: {e}", manifest_path.display())))?;
    if manifest.cue != expected.cue {
        return Err(Error::Format(format!(
            "manifest carries cue {:?}, expected {:?}",
            manifest.cue, expected.cue
        )));
    }
    let mut levels = BTreeMap::new();
    for &scale in expected.cue.scales() {
        if !manifest.scales.contains(&scale) {
            return Err(Error::Format(format!("missing level {scale}")));
        }
        let file = manifest
            .levels
            .get(&scale.to_string())
            .ok_or_else(|| Error::Format(format!("missing level {scale}")))?;
        let tensor = tensor_file::read_tensor(&dir.join(file))
            .map_err(|e| Error::Format(format!("level {scale}: {e}")))?;
        let want_c = expected
            .channels
            .at_scale(scale)
            .ok_or_else(|| Error::Config(format!("no channel plan for scale {scale}")))?;
        let want = [want_c, expected.base_h / scale, expected.base_w / scale];
        if tensor.shape() != want {
            return Err(Error::Format(format!(
                "level {scale}: shape {:?} does not match expected {want:?}",
                tensor.shape()
            )));
        }
        levels.insert(scale, tensor);
    }
    FeaturePyramid::new(expected.cue, levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::RunConfig;
    use crate::rng::SplitMix64;
    use crate::weights::ModelWeights;
    use tempfile::tempdir;

    fn random_image(h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = SplitMix64::new(seed);
        Tensor::from_parts(
            vec![3, h, w],
            (0..3 * h * w).map(|_| rng.next_unit()).collect(),
        )
    }

    #[test]
    fn level_shapes_follow_the_stride_schedule() {
        let cfg = RunConfig::default();
        let weights = ModelWeights::seeded(&cfg).unwrap();
        let img = random_image(64, 128, 1);
        let pyr = extract_builtin_features(&img, &weights, Cue::TextureLeft).unwrap();
        assert_eq!(pyr.level(4).unwrap().shape(), &[48, 16, 32]);
        assert_eq!(pyr.level(8).unwrap().shape(), &[64, 8, 16]);
        assert_eq!(pyr.level(16).unwrap().shape(), &[96, 4, 8]);
        assert!(pyr.level(2).is_err());

        let depth = extract_builtin_features(&img, &weights, Cue::Depth).unwrap();
        assert_eq!(depth.level(2).unwrap().shape(), &[32, 32, 64]);
    }

    #[test]
    fn zero_image_with_zero_bias_gives_zero_pyramid() {
        let cfg = RunConfig::default();
        let mut weights = ModelWeights::seeded(&cfg).unwrap();
        for bank in &mut weights.texture_stages {
            bank.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        let img = Tensor::zeros(&[3, 32, 32]);
        let pyr = extract_builtin_features(&img, &weights, Cue::TextureLeft).unwrap();
        for scale in [4, 8, 16] {
            assert!(pyr.level(scale).unwrap().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn identical_images_give_identical_pyramids() {
        let cfg = RunConfig::default();
        let weights = ModelWeights::seeded(&cfg).unwrap();
        let img = random_image(32, 48, 2);
        let a = extract_builtin_features(&img, &weights, Cue::TextureLeft).unwrap();
        let b = extract_builtin_features(&img.clone(), &weights, Cue::TextureLeft).unwrap();
        for scale in [4, 8, 16] {
            assert_eq!(a.level(scale).unwrap(), b.level(scale).unwrap());
        }
    }

    #[test]
    fn features_stay_finite_on_unit_images() {
        let cfg = RunConfig::default();
        let weights = ModelWeights::seeded(&cfg).unwrap();
        let img = random_image(32, 32, 3);
        for cue in [Cue::TextureLeft, Cue::Depth] {
            let pyr = extract_builtin_features(&img, &weights, cue).unwrap();
            for scale in cue.scales() {
                assert!(pyr
                    .level(*scale)
                    .unwrap()
                    .data()
                    .iter()
                    .all(|v| v.is_finite()));
            }
        }
    }

    #[test]
    fn rejects_indivisible_dimensions() {
        let cfg = RunConfig::default();
        let weights = ModelWeights::seeded(&cfg).unwrap();
        let img = Tensor::zeros(&[3, 30, 32]);
        assert!(matches!(
            extract_builtin_features(&img, &weights, Cue::TextureLeft),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn periodic_shift_covariance() {
        let cfg = RunConfig::default();
        let weights = ModelWeights::seeded(&cfg).unwrap();
        // period-16 texture: a cyclic shift by 16 reproduces the input,
        // hence the pyramid, bit for bit
        let (h, w) = (64usize, 128usize);
        let mut rng = SplitMix64::new(4);
        let tile: Vec<f32> = (0..3 * 16 * 16).map(|_| rng.next_unit()).collect();
        let periodic = |shift: usize| {
            let mut data = vec![0.0f32; 3 * h * w];
            for c in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        let sx = (x + shift) % 16;
                        data[(c * h + y) * w + x] = tile[(c * 16 + y % 16) * 16 + sx];
                    }
                }
            }
            Tensor::from_parts(vec![3, h, w], data)
        };
        let a = extract_builtin_features(&periodic(0), &weights, Cue::TextureLeft).unwrap();
        let b = extract_builtin_features(&periodic(16), &weights, Cue::TextureLeft).unwrap();
        for scale in [4, 8, 16] {
            assert_eq!(a.level(scale).unwrap(), b.level(scale).unwrap());
        }

        // period-32 texture shifted by 16: interior columns shift by 16/scale
        let tile32: Vec<f32> = (0..3 * 32 * 32).map(|_| rng.next_unit()).collect();
        let periodic32 = |shift: usize| {
            let mut data = vec![0.0f32; 3 * h * w];
            for c in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        let sx = (x + shift) % 32;
                        data[(c * h + y) * w + x] = tile32[(c * 32 + y % 32) * 32 + sx];
                    }
                }
            }
            Tensor::from_parts(vec![3, h, w], data)
        };
        let a = extract_builtin_features(&periodic32(0), &weights, Cue::TextureLeft).unwrap();
        let b = extract_builtin_features(&periodic32(16), &weights, Cue::TextureLeft).unwrap();
        for scale in [4usize, 8, 16] {
            let fa = a.level(scale).unwrap();
            let fb = b.level(scale).unwrap();
            let (c, hh, ww) = (fa.shape()[0], fa.shape()[1], fa.shape()[2]);
            let shift = 16 / scale;
            // one border row/column per scale is contaminated by zero padding
            let margin = 1;
            // shifted image column x corresponds to original column x+shift
            let mut checked = 0usize;
            for cc in 0..c {
                for y in margin..hh - margin {
                    for x in margin..ww.saturating_sub(margin + shift) {
                        let vb = fb.at3(cc, y, x);
                        let va = fa.at3(cc, y, x + shift);
                        assert!(
                            (vb - va).abs() <= 1e-5,
                            "scale {scale} c{cc} ({y},{x}): {vb} vs {va}"
                        );
                        checked += 1;
                    }
                }
            }
            assert!(checked > 0, "no interior pixels checked at scale {scale}");
        }
    }

    #[test]
    fn identity_fusion_reproduces_texture() {
        let mut cfg = RunConfig::default();
        cfg.channels.c4 = 16;
        cfg.channels.c8 = 16;
        cfg.channels.c16 = 16;
        cfg.channels.c2 = 8;
        let mut weights = ModelWeights::seeded(&cfg).unwrap();
        weights.apply_identity_fusion(&cfg);
        let img = random_image(32, 32, 5);
        let tex = extract_builtin_features(&img, &weights, Cue::TextureLeft).unwrap();
        let dep = extract_builtin_features(&img, &weights, Cue::Depth).unwrap();
        let fused = scf_fuse(&tex, &dep, &weights).unwrap();
        for scale in [4, 8, 16] {
            assert_eq!(fused.level(scale).unwrap(), tex.level(scale).unwrap());
        }
    }

    #[test]
    fn zero_fusion_weights_give_zero_features() {
        let mut cfg = RunConfig::default();
        cfg.channels.c4 = 16;
        cfg.channels.c8 = 16;
        cfg.channels.c16 = 16;
        cfg.channels.c2 = 8;
        let mut weights = ModelWeights::seeded(&cfg).unwrap();
        for scale in [4usize, 8, 16] {
            let c = cfg.channels.at_scale(scale).unwrap();
            weights.scf.insert(
                scale,
                crate::tensor::KernelBank::new(
                    Tensor::zeros(&[c, 2 * c, 1, 1]),
                    vec![0.0; c],
                )
                .unwrap(),
            );
        }
        let img = random_image(32, 32, 6);
        let tex = extract_builtin_features(&img, &weights, Cue::TextureLeft).unwrap();
        let dep = extract_builtin_features(&img, &weights, Cue::Depth).unwrap();
        let fused = scf_fuse(&tex, &dep, &weights).unwrap();
        for scale in [4, 8, 16] {
            assert!(fused.level(scale).unwrap().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn fusion_matches_per_pixel_matvec_oracle() {
        let mut cfg = RunConfig::default();
        cfg.channels.c4 = 16;
        cfg.channels.c8 = 16;
        cfg.channels.c16 = 16;
        cfg.channels.c2 = 8;
        let weights = ModelWeights::seeded(&cfg).unwrap();
        let img = random_image(32, 32, 7);
        let tex = extract_builtin_features(&img, &weights, Cue::TextureLeft).unwrap();
        let dep = extract_builtin_features(&img, &weights, Cue::Depth).unwrap();
        let fused = scf_fuse(&tex, &dep, &weights).unwrap();
        for scale in [4usize, 8, 16] {
            let f_l = tex.level(scale).unwrap();
            let f_d = dep.level(scale).unwrap();
            let got = fused.level(scale).unwrap();
            assert_eq!(got.shape()[1..], f_l.shape()[1..]);
            let bank = &weights.scf[&scale];
            let c = f_l.shape()[0];
            let (h, w) = (f_l.shape()[1], f_l.shape()[2]);
            for y in 0..h {
                for x in 0..w {
                    for co in 0..c {
                        let mut acc = bank.bias[co] as f64;
                        for ci in 0..c {
                            acc += bank.weight.at4(co, ci, 0, 0) as f64
                                * f_l.at3(ci, y, x) as f64;
                            acc += bank.weight.at4(co, c + ci, 0, 0) as f64
                                * f_d.at3(ci, y, x) as f64;
                        }
                        let want = acc as f32;
                        let v = got.at3(co, y, x);
                        assert!((v - want).abs() <= 1e-6 * want.abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn pyramid_round_trip_and_errors() {
        let cfg = RunConfig::default();
        let weights = ModelWeights::seeded(&cfg).unwrap();
        let img = random_image(32, 48, 8);
        let pyr = extract_builtin_features(&img, &weights, Cue::Depth).unwrap();
        let dir = tempdir().unwrap();
        write_feature_pyramid(&pyr, dir.path()).unwrap();
        let expected = PyramidExpectation {
            cue: Cue::Depth,
            base_h: 32,
            base_w: 48,
            channels: &cfg.channels,
        };
        let back = load_feature_pyramid(dir.path(), &expected).unwrap();
        for scale in [2, 4, 8, 16] {
            assert_eq!(back.level(scale).unwrap(), pyr.level(scale).unwrap());
        }

        // remove a level from the manifest: the error names the level
        let manifest_path = dir.path().join("manifest.json");
        let text = std::fs::read_to_string(&manifest_path).unwrap();
        let mut manifest: PyramidManifest = serde_json::from_str(&text).unwrap();
        manifest.scales.retain(|&s| s != 8);
        manifest.levels.remove("8");
        std::fs::write(&manifest_path, serde_json::to_string(&manifest).unwrap()).unwrap();
        let err = load_feature_pyramid(dir.path(), &expected).unwrap_err();
        assert!(matches!(err, Error::Format(ref m) if m.contains("missing level 8")), "{err}");

        // corrupt one level with a NaN
        std::fs::write(&manifest_path, text).unwrap();
        let lvl = dir.path().join("level4.tnsr");
        let mut bytes = std::fs::read(&lvl).unwrap();
        let off = bytes.len() - 4;
        bytes[off..].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&lvl, bytes).unwrap();
        assert!(load_feature_pyramid(dir.path(), &expected).is_err());
    }

    #[test]
    fn padding_replicates_edges_and_reports_original() {
        let img = random_image(30, 50, 9);
        let pair = StereoPair::new(img.clone(), img).unwrap();
        let (padded, (h0, w0)) = pair.pad_to_multiple(16);
        assert_eq!((h0, w0), (30, 50));
        assert_eq!(padded.height(), 32);
        assert_eq!(padded.width(), 64);
        // bottom-right corner replicates the last source pixel
        assert_eq!(padded.left.at3(0, 31, 63), pair.left.at3(0, 29, 49));
        assert_eq!(padded.left.at3(1, 10, 55), pair.left.at3(1, 10, 49));
    }
}
