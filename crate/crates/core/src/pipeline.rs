//! End-to-end inference: features, fusion, correlation volume, dynamic
//! aggregation, soft-argmin, iterative refinement, and convex upsampling,
//! with the output cropped back to the input dimensions.

use std::path::Path;

use crate::cost_volume::{build_gwc_volume, CostVolume};
use crate::ddca::{ddca_aggregate, soft_argmin, DdcaConfig};
use crate::error::Result;
use crate::features::{
    extract_builtin_features, load_feature_pyramid, scf_fuse, Cue, FeaturePyramid,
    PyramidExpectation, StereoPair,
};
use crate::io::config::RunConfig;
use crate::refine::{convex_upsample, refine_iterate, DisparityMap, GruState, Resolution};
use crate::tensor::Tensor;
use crate::weights::ModelWeights;

/// Everything the inference run produces; intermediate artifacts are kept
/// around for dumps and evaluation.
pub struct PipelineOutput {
    pub disparity: DisparityMap,
    pub d0: DisparityMap,
    pub iterates: Vec<DisparityMap>,
    pub volume_raw: CostVolume,
    pub volume_aggregated: CostVolume,
    pub final_state: GruState,
    /// Depth-aware features at scale 4 (kept for affinity dumps).
    pub f_da4: Tensor,
}

/// Where the depth feature pyramid comes from.
pub enum DepthFeatures<'a> {
    Builtin,
    FromFile(&'a Path),
    Precomputed(FeaturePyramid),
}

/// Runs the full forward pipeline on a stereo pair.
pub fn run_inference(
    pair: &StereoPair,
    depth: DepthFeatures<'_>,
    weights: &ModelWeights,
    cfg: &RunConfig,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    weights.check_shapes(cfg)?;
    let (padded, (h0, w0)) = pair.pad_to_multiple(16);

    let tex_left = extract_builtin_features(&padded.left, weights, Cue::TextureLeft)?;
    let tex_right = extract_builtin_features(&padded.right, weights, Cue::TextureRight)?;
    let depth_pyr = match depth {
        DepthFeatures::Builtin => extract_builtin_features(&padded.left, weights, Cue::Depth)?,
        DepthFeatures::FromFile(path) => load_feature_pyramid(
            path,
            &PyramidExpectation {
                cue: Cue::Depth,
                base_h: padded.height(),
                base_w: padded.width(),
                channels: &cfg.channels,
            },
        )?,
        DepthFeatures::Precomputed(pyr) => pyr,
    };
    let f_da = scf_fuse(&tex_left, &depth_pyr, weights)?;
    let f_da4 = f_da.level(4)?.clone();

    let volume_raw = build_gwc_volume(
        tex_left.level(4)?,
        tex_right.level(4)?,
        cfg.d_max4,
        cfg.groups,
    )?;
    let volume_aggregated = ddca_aggregate(&volume_raw, &f_da4, weights, &DdcaConfig::from(cfg))?;

    let d0 = DisparityMap::dense(soft_argmin(&volume_aggregated, weights)?, Resolution::Quarter)?;
    let (iterates, final_state) = refine_iterate(
        &volume_aggregated,
        &d0,
        &f_da4,
        weights,
        cfg.iters,
        cfg.lookup_radius,
        cfg.d_max4,
    )?;

    let last = iterates.last().unwrap_or(&d0);
    let full = convex_upsample(last, &final_state, depth_pyr.level(2)?, weights)?;
    let disparity = full.crop(h0, w0)?;

    Ok(PipelineOutput {
        disparity,
        d0,
        iterates,
        volume_raw,
        volume_aggregated,
        final_state,
        f_da4,
    })
}
