use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use ggev_core::cost_volume::build_gwc_volume;
use ggev_core::ddca::compute_affinity;
use ggev_core::error::Error;
use ggev_core::eval::{
    generate_stereogram, metric_report, PlaneDisparity, PlaneSpec, SceneDescriptor,
};
use ggev_core::features::{
    extract_builtin_features, write_feature_pyramid, Cue, StereoPair,
};
use ggev_core::io::config::{FeatureSource, RunConfig, WeightsPreset};
use ggev_core::io::{
    read_mask, read_pfm, read_pnm_rgb, write_colormap, write_mask, write_pfm, write_pnm,
    write_tensor,
};
use ggev_core::pipeline::{run_inference, DepthFeatures};
use ggev_core::refine::Resolution;
use ggev_core::tensor::Tensor;
use ggev_core::weights::ModelWeights;

use crate::bench;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

pub type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(
    name = "ggev",
    version,
    about = "Real-time-style stereo matching pipeline (CPU, forward only)",
    after_help = "Exit codes: 0 success, 1 usage error, 2 data/format error."
)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

/// Flags shared by every pipeline-running command; explicit flags override
/// the JSON config.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// JSON run configuration; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for all weight and scene randomness.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Refinement iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Quarter-resolution disparity hypothesis count.
    #[arg(long = "d-max4")]
    pub d_max4: Option<usize>,
    /// Worker threads for disparity-slice parallelism
    /// (falls back to GGEV_THREADS, then all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Weight bundle flavor.
    #[arg(long, value_enum)]
    pub preset: Option<PresetArg>,
    /// Depth feature pyramid manifest (switches the depth cue to files).
    #[arg(long = "depth-features")]
    pub depth_features: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum PresetArg {
    Seeded,
    MatchingCore,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(iters) = self.iters {
            cfg.iters = iters;
        }
        if let Some(d) = self.d_max4 {
            cfg.d_max4 = d;
        }
        if let Some(t) = self.threads {
            cfg.threads = Some(t);
        }
        if let Some(p) = self.preset {
            cfg.preset = match p {
                PresetArg::Seeded => WeightsPreset::Seeded,
                PresetArg::MatchingCore => WeightsPreset::MatchingCore,
            };
        }
        if let Some(p) = &self.depth_features {
            cfg.feature_source = FeatureSource::Files;
            cfg.paths.depth_features = Some(p.display().to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a random-dot stereo scene with ground truth and masks.
    GenScene {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory for left.pnm, right.pnm, gt.pfm, noc.pgm,
        /// scene.json.
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        /// Full-image background disparity (pixels, integer-valued).
        #[arg(long, default_value_t = 8.0)]
        background: f32,
        /// Extra foreground plane `x0:y0:x1:y1:d`, repeatable, painted in
        /// order.
        #[arg(long = "plane")]
        planes: Vec<String>,
        /// JSON file with a full plane layout (overrides --background and
        /// --plane).
        #[arg(long)]
        layout: Option<PathBuf>,
    },
    /// Run the built-in extractor on one image and write a feature-pyramid
    /// container.
    ExtractFeatures {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        image: PathBuf,
        /// Which encoder to run.
        #[arg(long, value_enum)]
        cue: CueArg,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Estimate a full-resolution disparity map for a stereo pair.
    Infer {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        /// Output disparity PFM.
        #[arg(long)]
        out: PathBuf,
        /// Also write the raw correlation volume.
        #[arg(long = "dump-volume")]
        dump_volume: Option<PathBuf>,
        /// Also write the aggregated volume.
        #[arg(long = "dump-aggregated")]
        dump_aggregated: Option<PathBuf>,
        /// Write per-iteration quarter-resolution disparities into this
        /// directory.
        #[arg(long = "iters-out")]
        iters_out: Option<PathBuf>,
        /// Also write a color rendering of the disparity.
        #[arg(long)]
        colormap: Option<PathBuf>,
    },
    /// Compare a disparity map against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Comma-separated bad-pixel thresholds in pixels.
        #[arg(long, default_value = "1,2,3")]
        thresholds: String,
        /// Region mask (P5; nonzero = evaluate).
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Region label for the report.
        #[arg(long)]
        region: Option<String>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and dump the correlation volume for a pair.
    DumpVolume {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dump the aggregated volume instead of the raw one.
        #[arg(long)]
        aggregated: bool,
    },
    /// Dump per-group affinity rows for one disparity hypothesis.
    DumpAffinity {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        left: PathBuf,
        #[arg(long)]
        right: PathBuf,
        /// Disparity hypothesis index (quarter resolution).
        #[arg(long)]
        disparity: usize,
        /// Keep every n-th pixel of the quarter grid.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Micro-benchmarks with correctness gates.
    Bench {
        /// Operation to benchmark.
        #[arg(long, default_value = "dynamic-conv")]
        op: String,
        /// Spatial size, e.g. 64x64.
        #[arg(long, default_value = "64x64")]
        size: String,
        /// Number of disparity slices.
        #[arg(long, default_value_t = 16)]
        disparities: usize,
        #[arg(long, default_value_t = 24)]
        channels: usize,
        #[arg(long, default_value_t = 8)]
        groups: usize,
        /// Dynamic kernel size.
        #[arg(long, default_value_t = 7)]
        kernel: usize,
        /// Timing repetitions (median is reported).
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSON report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum CueArg {
    Texture,
    Depth,
}

/// Builds the worker pool and dispatches the subcommand inside it.
pub fn run(cli: Cli) -> CliResult {
    let threads = thread_count(&cli.cmd)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?;
    pool.install(|| dispatch(cli.cmd))
}

fn thread_count(cmd: &Command) -> Result<usize, CliError> {
    let flag = match cmd {
        Command::GenScene { cfg, .. }
        | Command::ExtractFeatures { cfg, .. }
        | Command::Infer { cfg, .. }
        | Command::DumpVolume { cfg, .. }
        | Command::DumpAffinity { cfg, .. } => cfg.threads,
        _ => None,
    };
    if let Some(t) = flag {
        if t == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        return Ok(t);
    }
    if let Ok(env) = std::env::var("GGEV_THREADS") {
        let t: usize = env
            .parse()
            .map_err(|_| CliError::Usage(format!("GGEV_THREADS='{env}' is not a number")))?;
        if t == 0 {
            return Err(CliError::Usage("GGEV_THREADS must be >= 1".into()));
        }
        return Ok(t);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn dispatch(cmd: Command) -> CliResult {
    match cmd {
        Command::GenScene {
            cfg,
            out_dir,
            height,
            width,
            background,
            planes,
            layout,
        } => gen_scene(cfg, out_dir, height, width, background, planes, layout),
        Command::ExtractFeatures {
            cfg,
            image,
            cue,
            out_dir,
        } => extract_features(cfg, image, cue, out_dir),
        Command::Infer {
            cfg,
            left,
            right,
            out,
            dump_volume,
            dump_aggregated,
            iters_out,
            colormap,
        } => infer(
            cfg,
            left,
            right,
            out,
            dump_volume,
            dump_aggregated,
            iters_out,
            colormap,
        ),
        Command::Eval {
            pred,
            gt,
            thresholds,
            mask,
            region,
            out,
        } => eval(pred, gt, thresholds, mask, region, out),
        Command::DumpVolume {
            cfg,
            left,
            right,
            out,
            aggregated,
        } => dump_volume(cfg, left, right, out, aggregated),
        Command::DumpAffinity {
            cfg,
            left,
            right,
            disparity,
            stride,
            out,
        } => dump_affinity(cfg, left, right, disparity, stride, out),
        Command::Bench {
            op,
            size,
            disparities,
            channels,
            groups,
            kernel,
            runs,
            seed,
            out,
        } => run_bench(op, size, disparities, channels, groups, kernel, runs, seed, out),
    }
}

fn parse_plane(spec: &str) -> Result<PlaneSpec, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 5 {
        return Err(CliError::Usage(format!(
            "plane spec '{spec}' must be x0:y0:x1:y1:d"
        )));
    }
    let mut nums = [0usize; 4];
    for (n, p) in nums.iter_mut().zip(&parts[..4]) {
        *n = p
            .parse()
            .map_err(|_| CliError::Usage(format!("bad plane coordinate '{p}'")))?;
    }
    let d: f32 = parts[4]
        .parse()
        .map_err(|_| CliError::Usage(format!("bad plane disparity '{}'", parts[4])))?;
    Ok(PlaneSpec {
        rect: Some([nums[0], nums[1], nums[2], nums[3]]),
        disparity: PlaneDisparity::Constant(d),
    })
}

fn gen_scene(
    cfg: ConfigArgs,
    out_dir: PathBuf,
    height: usize,
    width: usize,
    background: f32,
    planes: Vec<String>,
    layout: Option<PathBuf>,
) -> CliResult {
    let cfg = cfg.resolve()?;
    let layout: Vec<PlaneSpec> = match layout {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(Error::from)?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Format(format!("layout {}: {e}", path.display())))?
        }
        None => {
            let mut specs = vec![PlaneSpec {
                rect: None,
                disparity: PlaneDisparity::Constant(background),
            }];
            for p in &planes {
                specs.push(parse_plane(p)?);
            }
            specs
        }
    };
    let scene = generate_stereogram(height, width, &layout, cfg.seed)?;
    std::fs::create_dir_all(&out_dir).map_err(Error::from)?;
    write_pnm(&scene.pair.left, &out_dir.join("left.pnm"))?;
    write_pnm(&scene.pair.right, &out_dir.join("right.pnm"))?;
    write_pfm(&scene.gt, &out_dir.join("gt.pfm"))?;
    write_mask(&scene.noc_mask(), &out_dir.join("noc.pgm"))?;
    let desc: &SceneDescriptor = &scene.descriptor;
    let text = serde_json::to_string_pretty(desc)
        .map_err(|e| Error::Format(format!("descriptor serialization: {e}")))?;
    std::fs::write(out_dir.join("scene.json"), text).map_err(Error::from)?;
    eprintln!(
        "scene {}x{} seed {} written to {}",
        width,
        height,
        cfg.seed,
        out_dir.display()
    );
    Ok(())
}

fn extract_features(cfg: ConfigArgs, image: PathBuf, cue: CueArg, out_dir: PathBuf) -> CliResult {
    let cfg = cfg.resolve()?;
    let weights = ModelWeights::from_config(&cfg)?;
    let img = read_pnm_rgb(&image)?;
    let cue = match cue {
        CueArg::Texture => Cue::TextureLeft,
        CueArg::Depth => Cue::Depth,
    };
    let pyramid = extract_builtin_features(&img, &weights, cue)?;
    write_feature_pyramid(&pyramid, &out_dir)?;
    eprintln!("pyramid ({cue:?}) written to {}", out_dir.display());
    Ok(())
}

fn load_pair(left: &Path, right: &Path) -> Result<StereoPair, CliError> {
    let l = read_pnm_rgb(left)?;
    let r = read_pnm_rgb(right)?;
    Ok(StereoPair::new(l, r)?)
}

fn depth_source(cfg: &RunConfig) -> Result<DepthFeatures<'_>, CliError> {
    match cfg.feature_source {
        FeatureSource::Builtin => Ok(DepthFeatures::Builtin),
        FeatureSource::Files => {
            let path = cfg.paths.depth_features.as_deref().ok_or_else(|| {
                CliError::Usage(
                    "feature source is 'files' but no depth feature manifest given".into(),
                )
            })?;
            Ok(DepthFeatures::FromFile(Path::new(path)))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn infer(
    cfg: ConfigArgs,
    left: PathBuf,
    right: PathBuf,
    out: PathBuf,
    dump_volume: Option<PathBuf>,
    dump_aggregated: Option<PathBuf>,
    iters_out: Option<PathBuf>,
    colormap: Option<PathBuf>,
) -> CliResult {
    let cfg = cfg.resolve()?;
    let weights = ModelWeights::from_config(&cfg)?;
    let pair = load_pair(&left, &right)?;
    let result = run_inference(&pair, depth_source(&cfg)?, &weights, &cfg)?;
    write_pfm(&result.disparity, &out)?;
    if let Some(path) = dump_volume {
        write_tensor(&result.volume_raw.data, &path)?;
    }
    if let Some(path) = dump_aggregated {
        write_tensor(&result.volume_aggregated.data, &path)?;
    }
    if let Some(dir) = iters_out {
        std::fs::create_dir_all(&dir).map_err(Error::from)?;
        for (i, it) in result.iterates.iter().enumerate() {
            write_pfm(it, &dir.join(format!("iter{:02}.pfm", i + 1)))?;
        }
    }
    if let Some(path) = colormap {
        write_colormap(&result.disparity, &path)?;
    }
    eprintln!(
        "disparity {}x{} written to {}",
        result.disparity.width(),
        result.disparity.height(),
        out.display()
    );
    Ok(())
}

fn eval(
    pred: PathBuf,
    gt: PathBuf,
    thresholds: String,
    mask: Option<PathBuf>,
    region: Option<String>,
    out: Option<PathBuf>,
) -> CliResult {
    let pred = read_pfm(&pred, Resolution::Full)?;
    let gt = read_pfm(&gt, Resolution::Full)?;
    let mut parsed = Vec::new();
    for tok in thresholds.split(',') {
        let t: f64 = tok
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad threshold '{tok}'")))?;
        parsed.push(t);
    }
    let mask = match mask {
        Some(path) => Some(read_mask(&path)?),
        None => None,
    };
    let region_name = region.unwrap_or_else(|| {
        if mask.is_some() {
            "mask".to_string()
        } else {
            "all".to_string()
        }
    });
    let report = metric_report(&pred, &gt, &parsed, mask.as_ref(), &region_name)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    match out {
        Some(path) => std::fs::write(path, json + "\n").map_err(Error::from)?,
        None => println!("{json}"),
    }
    Ok(())
}

/// Shared front half of the pipeline for the dump commands.
fn volume_inputs(
    cfg: &RunConfig,
    left: &Path,
    right: &Path,
) -> Result<(ggev_core::cost_volume::CostVolume, Tensor, ModelWeights), CliError> {
    let weights = ModelWeights::from_config(cfg)?;
    let pair = load_pair(left, right)?;
    let (padded, _) = pair.pad_to_multiple(16);
    let tl = extract_builtin_features(&padded.left, &weights, Cue::TextureLeft)?;
    let tr = extract_builtin_features(&padded.right, &weights, Cue::TextureRight)?;
    let dp = match depth_source(cfg)? {
        DepthFeatures::Builtin => extract_builtin_features(&padded.left, &weights, Cue::Depth)?,
        DepthFeatures::FromFile(path) => ggev_core::features::load_feature_pyramid(
            path,
            &ggev_core::features::PyramidExpectation {
                cue: Cue::Depth,
                base_h: padded.height(),
                base_w: padded.width(),
                channels: &cfg.channels,
            },
        )?,
        DepthFeatures::Precomputed(p) => p,
    };
    let f_da = ggev_core::features::scf_fuse(&tl, &dp, &weights)?;
    let volume = build_gwc_volume(tl.level(4)?, tr.level(4)?, cfg.d_max4, cfg.groups)?;
    Ok((volume, f_da.level(4)?.clone(), weights))
}

fn dump_volume(
    cfg: ConfigArgs,
    left: PathBuf,
    right: PathBuf,
    out: PathBuf,
    aggregated: bool,
) -> CliResult {
    let cfg = cfg.resolve()?;
    let (volume, f_da4, weights) = volume_inputs(&cfg, &left, &right)?;
    let volume = if aggregated {
        ggev_core::ddca::ddca_aggregate(
            &volume,
            &f_da4,
            &weights,
            &ggev_core::ddca::DdcaConfig::from(&cfg),
        )?
    } else {
        volume
    };
    write_tensor(&volume.data, &out)?;
    eprintln!(
        "{} volume {:?} written to {}",
        if aggregated { "aggregated" } else { "raw" },
        volume.data.shape(),
        out.display()
    );
    Ok(())
}

fn dump_affinity(
    cfg: ConfigArgs,
    left: PathBuf,
    right: PathBuf,
    disparity: usize,
    stride: usize,
    out: PathBuf,
) -> CliResult {
    let cfg = cfg.resolve()?;
    if stride == 0 {
        return Err(CliError::Usage("--stride must be >= 1".into()));
    }
    let (volume, f_da4, weights) = volume_inputs(&cfg, &left, &right)?;
    if disparity >= volume.hypotheses() {
        return Err(CliError::Usage(format!(
            "--disparity {disparity} outside 0..{}",
            volume.hypotheses()
        )));
    }
    let slice = volume.slice(disparity);
    let affinity = compute_affinity(&slice, &f_da4, &weights, cfg.s, cfg.groups)?;
    // subsample the pixel grid and stack rows as [G, n_pixels, S^2]
    let (h, w) = (affinity.h, affinity.w);
    let ss = cfg.s * cfg.s;
    let mut pixels = Vec::new();
    for y in (0..h).step_by(stride) {
        for x in (0..w).step_by(stride) {
            pixels.push(y * w + x);
        }
    }
    let mut data = Vec::with_capacity(cfg.groups * pixels.len() * ss);
    for a_g in &affinity.groups {
        for &p in &pixels {
            data.extend_from_slice(&a_g.data()[p * ss..(p + 1) * ss]);
        }
    }
    let stacked = Tensor::new(&[cfg.groups, pixels.len(), ss], data)?;
    write_tensor(&stacked, &out)?;
    eprintln!(
        "affinity rows for hypothesis {disparity} ({} pixels, stride {stride}) written to {}",
        pixels.len(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_bench(
    op: String,
    size: String,
    disparities: usize,
    channels: usize,
    groups: usize,
    kernel: usize,
    runs: usize,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> CliResult {
    if op != "dynamic-conv" {
        return Err(CliError::Usage(format!(
            "unknown bench op '{op}' (available: dynamic-conv)"
        )));
    }
    let (h, w) = parse_size(&size)?;
    let report = bench::bench_dynamic_conv(&bench::BenchConfig {
        h,
        w,
        disparities,
        channels,
        groups,
        kernel,
        runs,
        seed: seed.unwrap_or(42),
    })?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Format(format!("report serialization: {e}")))?;
    match out {
        Some(path) => std::fs::write(path, json + "\n").map_err(Error::from)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn parse_size(size: &str) -> Result<(usize, usize), CliError> {
    let parts: Vec<&str> = size.split('x').collect();
    if parts.len() != 2 {
        return Err(CliError::Usage(format!("--size '{size}' must be WxH")));
    }
    let w: usize = parts[0]
        .parse()
        .map_err(|_| CliError::Usage(format!("bad size '{size}'")))?;
    let h: usize = parts[1]
        .parse()
        .map_err(|_| CliError::Usage(format!("bad size '{size}'")))?;
    if w == 0 || h == 0 {
        return Err(CliError::Usage("size must be positive".into()));
    }
    Ok((h, w))
}
