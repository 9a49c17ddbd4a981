//! Timing harness for the sliding-window dynamic convolution against its
//! per-pixel kernel-materialization oracle. Outputs are asserted equal
//! before any clock starts.

use std::time::Instant;

use serde::Serialize;

use ggev_core::ddca::{dynamic_group_conv, kernels_from_affinity, AffinityBundle, DynamicKernelField};
use ggev_core::error::{Error, Result};
use ggev_core::oracle::dynamic_group_conv_oracle;
use ggev_core::rng::SplitMix64;
use ggev_core::tensor::Tensor;
use ggev_core::weights::Linear;

#[derive(Debug, Clone, Serialize)]
pub struct BenchConfig {
    pub h: usize,
    pub w: usize,
    pub disparities: usize,
    pub channels: usize,
    pub groups: usize,
    pub kernel: usize,
    pub runs: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub op: String,
    pub config: BenchConfig,
    pub outputs_equal: bool,
    pub fast_ms_median: f64,
    pub oracle_ms_median: f64,
    pub speedup: f64,
}

fn random_tensor(shape: &[usize], rng: &mut SplitMix64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.next_symmetric(1.0)).collect();
    Tensor::new(shape, data).expect("random tensor is finite")
}

/// Builds one kernel field per slice the way the pipeline does: random
/// affinity rows through a seeded linear map and softmax.
fn build_fields(cfg: &BenchConfig, rng: &mut SplitMix64) -> Result<Vec<DynamicKernelField>> {
    let s2 = 16usize;
    let kk = cfg.kernel * cfg.kernel;
    let w_m = Linear {
        weight: random_tensor(&[kk, s2], rng),
        bias: (0..kk).map(|_| rng.next_symmetric(0.2)).collect(),
    };
    let mut fields = Vec::with_capacity(cfg.disparities);
    for _ in 0..cfg.disparities {
        let groups = (0..cfg.groups)
            .map(|_| random_tensor(&[cfg.h * cfg.w, s2], rng))
            .collect();
        let affinity = AffinityBundle {
            q: Tensor::zeros(&[1, 1]),
            k: Tensor::zeros(&[1, 1]),
            groups,
            h: cfg.h,
            w: cfg.w,
        };
        fields.push(kernels_from_affinity(&affinity, &w_m, cfg.kernel)?);
    }
    Ok(fields)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    xs[xs.len() / 2]
}

pub fn bench_dynamic_conv(cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.runs == 0 {
        return Err(Error::Config("bench runs must be >= 1".into()));
    }
    if !cfg.channels.is_multiple_of(cfg.groups) {
        return Err(Error::Config(format!(
            "{} channels not divisible by {} groups",
            cfg.channels, cfg.groups
        )));
    }
    let mut rng = SplitMix64::new(cfg.seed);
    let inputs: Vec<Tensor> = (0..cfg.disparities)
        .map(|_| random_tensor(&[cfg.channels, cfg.h, cfg.w], &mut rng))
        .collect();
    let fields = build_fields(cfg, &mut rng)?;

    // correctness gate: bit-identical outputs on every slice
    for (x, field) in inputs.iter().zip(fields.iter()) {
        let fast = dynamic_group_conv(x, field)?;
        let slow = dynamic_group_conv_oracle(x, field);
        if fast.data() != slow.data() {
            return Err(Error::Config(
                "fast path diverged from the oracle; refusing to time".into(),
            ));
        }
    }

    let mut fast_ms = Vec::with_capacity(cfg.runs);
    let mut oracle_ms = Vec::with_capacity(cfg.runs);
    for _ in 0..cfg.runs {
        let t = Instant::now();
        for (x, field) in inputs.iter().zip(fields.iter()) {
            std::hint::black_box(dynamic_group_conv(x, field)?);
        }
        fast_ms.push(t.elapsed().as_secs_f64() * 1e3);

        let t = Instant::now();
        for (x, field) in inputs.iter().zip(fields.iter()) {
            std::hint::black_box(dynamic_group_conv_oracle(x, field));
        }
        oracle_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let fast = median(fast_ms);
    let oracle = median(oracle_ms);
    Ok(BenchReport {
        op: "dynamic-conv".into(),
        config: cfg.clone(),
        outputs_equal: true,
        fast_ms_median: fast,
        oracle_ms_median: oracle,
        speedup: oracle / fast,
    })
}
