//! `posepattern`: batch entry points for annotation and re-scoring.
//!
//! Exit codes: 0 success, 1 input/data error (or per-instance annotation
//! errors), 2 usage error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use posepattern_core::annotate::{
    self, prepare_objects, AnnotateConfig, ImageKey, InstanceDistribution, PatternConfig,
};
use posepattern_core::bop::{self, DatasetIndex, DatasetOptions};
use posepattern_core::candidates::{build_candidates, CandidateConfig};
use posepattern_core::metrics::{
    self, ClampMode, DistConfig, DistributionEstimate, ErrorMetric, EvalContext, EvalModel,
    PoseEstimate,
};
use posepattern_core::{CameraModel, PointSet, RigidTransform, TriangleMesh};

#[derive(Parser, Debug)]
#[command(
    name = "posepattern",
    version,
    about = "Visibility-aware symmetry annotation and pose re-scoring"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute and cache the per-object pattern tables.
    Precompute(PrecomputeArgs),
    /// Annotate every instance of a dataset split with its symmetry pattern.
    Annotate(AnnotateArgs),
    /// Score single-pose results with MSSD/MSPD recall.
    EvalSingle(EvalSingleArgs),
    /// Score pose-distribution results with precision/recall.
    EvalDist(EvalDistArgs),
    /// Export ground-truth distributions (and estimates) as quaternion CSVs.
    ExportViz(ExportVizArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct DatasetArgs {
    /// BOP dataset root.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value = "models")]
    models_dir: String,
    /// Camera file with the image size (default: camera.json).
    #[arg(long)]
    camera_file: Option<String>,
}

impl DatasetArgs {
    fn options(&self) -> DatasetOptions {
        DatasetOptions {
            split: self.split.clone(),
            models_dir: self.models_dir.clone(),
            camera_file: self.camera_file.clone(),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct PatternArgs {
    /// Symmetry tolerance ε in mm.
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Surface sampling resolution in mm.
    #[arg(long, default_value_t = 0.5)]
    resolution: f64,
    /// Discretization steps per turn of a continuous symmetry.
    #[arg(long, default_value_t = 360)]
    steps: usize,
    /// Color tolerance ζ (linear RGB distance); enables the color test.
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also add continuous × discrete symmetry products to the candidates.
    #[arg(long)]
    products: bool,
}

impl PatternArgs {
    fn config(&self) -> PatternConfig {
        PatternConfig {
            epsilon: self.epsilon,
            resolution: self.resolution,
            steps_per_turn: self.steps,
            color_tolerance: self.zeta,
            sampling_seed: self.seed,
            compose_products: self.products,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct PrecomputeArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    pattern: PatternArgs,
    /// Comma-separated object ids (default: all).
    #[arg(long, value_delimiter = ',')]
    objects: Option<Vec<u32>>,
    /// Cache directory (default: <dataset>/pattern_cache).
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct AnnotateArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[command(flatten)]
    pattern: PatternArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Soft-intersection tolerance in samples.
    #[arg(long, default_value_t = annotate::DEFAULT_TAU)]
    tau: u32,
    /// Depth tolerance of the visibility test in mm.
    #[arg(long, default_value_t = posepattern_core::visibility::DEFAULT_DEPTH_TOLERANCE)]
    depth_tol: f64,
    /// Minimum visible fraction of samples to annotate an instance.
    #[arg(long, default_value_t = posepattern_core::visibility::DEFAULT_VISIBILITY_FLOOR)]
    visibility_floor: f64,
    /// Intersect rendered visibility with the dataset's mask_visib images.
    #[arg(long)]
    use_masks: bool,
    #[arg(long, value_delimiter = ',')]
    objects: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    scenes: Option<Vec<u32>>,
    /// Pattern cache directory (default: <out>/pattern_cache).
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
enum PatternSource {
    /// Per-image patterns from the annotations.
    PerImage,
    /// Object-level symmetries from models_info.json.
    Bop,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Directory with <scene>/scene_gt_dist.json files.
    #[arg(long)]
    annotations: PathBuf,
    /// Results CSV.
    #[arg(long)]
    results: PathBuf,
    /// Report JSON to write.
    #[arg(long)]
    out: PathBuf,
    /// Use at most this many model vertices per object (evenly strided).
    #[arg(long)]
    max_eval_points: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct EvalSingleArgs {
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long, value_delimiter = ',', default_value = "mssd,mspd")]
    metrics: Vec<MetricArg>,
    #[arg(long, value_enum, default_value_t = PatternSource::PerImage)]
    pattern: PatternSource,
    /// Steps per turn for continuous symmetries with `--pattern bop`.
    #[arg(long, default_value_t = 315)]
    bop_sym_steps: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum MetricArg {
    Mssd,
    Mspd,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum ClampArg {
    Upper,
    Literal,
}

#[derive(Args, Debug, Serialize)]
struct EvalDistArgs {
    #[command(flatten)]
    eval: EvalArgs,
    #[arg(long, value_enum, default_value_t = ClampArg::Upper)]
    clamp: ClampArg,
    /// Keep only the most probable modes of each distribution.
    #[arg(long)]
    max_modes: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct ExportVizArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// Distribution results CSV to export alongside.
    #[arg(long)]
    results: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_modes: Option<usize>,
}

fn print_config(command: &str, config: &impl Serialize) -> Value {
    let value = json!({ "command": command, "config": config });
    eprintln!(
        "{}",
        serde_json::to_string_pretty(&value).expect("config serializes")
    );
    value
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(args: &DatasetArgs) -> Result<DatasetIndex> {
    if !args.dataset.exists() {
        bail!("dataset path {} does not exist", args.dataset.display());
    }
    Ok(bop::load_dataset(&args.dataset, &args.options())?)
}

fn cmd_precompute(args: &PrecomputeArgs) -> Result<bool> {
    print_config("precompute", args);
    let dataset = load_dataset(&args.dataset)?;
    let ids: Vec<u32> = match &args.objects {
        Some(ids) => ids.clone(),
        None => dataset.objects.keys().copied().collect(),
    };
    let cache = args
        .cache
        .clone()
        .unwrap_or_else(|| args.dataset.dataset.join("pattern_cache"));
    let meshes = annotate::load_meshes(&dataset, &ids);
    let prepared = prepare_objects(
        &dataset,
        &meshes,
        &ids,
        &args.pattern.config(),
        Some(&cache),
    );
    let mut ok = true;
    for (id, r) in prepared {
        match r {
            Ok(o) => eprintln!(
                "object {id}: {} samples x {} candidates{}",
                o.samples.len(),
                o.candidates.len(),
                if o.from_cache { " (cached)" } else { "" }
            ),
            Err(e) => {
                eprintln!("object {id}: error: {e}");
                ok = false;
            }
        }
    }
    Ok(ok)
}

fn cmd_annotate(args: &AnnotateArgs) -> Result<bool> {
    if !args.dataset.dataset.exists() {
        bail!(
            "dataset path {} does not exist",
            args.dataset.dataset.display()
        );
    }
    let mut config = AnnotateConfig::new(&args.dataset.dataset, &args.out);
    config.split = args.dataset.split.clone();
    config.models_dir = args.dataset.models_dir.clone();
    config.camera_file = args.dataset.camera_file.clone();
    config.pattern = args.pattern.config();
    config.tau = args.tau;
    config.depth_tolerance = args.depth_tol;
    config.visibility_floor = args.visibility_floor;
    config.use_masks = args.use_masks;
    config.objects = args.objects.clone();
    config.scenes = args.scenes.clone();
    config.cache_dir = Some(
        args.cache
            .clone()
            .unwrap_or_else(|| args.out.join("pattern_cache")),
    );
    print_config("annotate", &config);
    let report = annotate::annotate_dataset(&config)?;
    eprintln!(
        "{} instances: {} annotated, {} skipped, {} errors{}",
        report.n_instances,
        report.n_annotated,
        report.n_skipped,
        report.errors.len(),
        if report.resumed_scenes.is_empty() {
            String::new()
        } else {
            format!(", {} scenes already done", report.resumed_scenes.len())
        }
    );
    Ok(report.errors.is_empty())
}

/// Model vertices, evenly strided down to `max` points.
fn eval_points(mesh: &TriangleMesh, max: Option<usize>) -> Result<PointSet> {
    let v = mesh.vertices();
    let stride = match max {
        Some(m) if m > 0 && v.len() > m => v.len().div_ceil(m),
        _ => 1,
    };
    Ok(PointSet::from_positions(
        v.iter().step_by(stride).copied().collect(),
    )?)
}

struct EvalInputs {
    dataset: DatasetIndex,
    annotations: Vec<InstanceDistribution>,
    models: BTreeMap<u32, EvalModel>,
    cameras: BTreeMap<ImageKey, CameraModel>,
}

fn load_eval_inputs(args: &EvalArgs) -> Result<EvalInputs> {
    let dataset = load_dataset(&args.dataset)?;
    let annotations = bop::read_annotations(&args.annotations)?;
    let mut models = BTreeMap::new();
    for a in &annotations {
        if models.contains_key(&a.obj_id) {
            continue;
        }
        let info = dataset
            .objects
            .get(&a.obj_id)
            .with_context(|| format!("object {} is not in models_info.json", a.obj_id))?;
        let mesh = TriangleMesh::load_ply(&info.model_path)?;
        models.insert(
            a.obj_id,
            EvalModel {
                points: eval_points(&mesh, args.max_eval_points)?,
                diameter: info.diameter,
            },
        );
    }
    let cameras = dataset
        .scenes
        .iter()
        .flat_map(|s| &s.images)
        .map(|i| {
            (
                ImageKey {
                    scene_id: i.scene_id,
                    im_id: i.im_id,
                },
                i.camera,
            )
        })
        .collect();
    Ok(EvalInputs {
        dataset,
        annotations,
        models,
        cameras,
    })
}

fn read_results(path: &Path) -> Result<bop::ResultsFile> {
    let file = bop::read_results_csv(path)?;
    for r in &file.rejected {
        eprintln!("{}:{}: rejected: {}", path.display(), r.line, r.reason);
    }
    Ok(file)
}

/// Object-level symmetry sets as the BOP toolkit expands them.
fn bop_patterns(
    dataset: &DatasetIndex,
    ids: impl Iterator<Item = u32>,
    steps: usize,
) -> Result<BTreeMap<u32, Vec<RigidTransform>>> {
    let mut out = BTreeMap::new();
    for id in ids {
        let info = &dataset.objects[&id];
        let config = CandidateConfig {
            steps_per_turn: steps,
            scale: info.diameter / 2.0,
            dedup_threshold: 0.0,
            compose_products: true,
        };
        out.insert(
            id,
            build_candidates(&info.symmetries, &config)?
                .transforms()
                .to_vec(),
        );
    }
    Ok(out)
}

fn cmd_eval_single(args: &EvalSingleArgs) -> Result<bool> {
    let config = print_config("eval-single", args);
    let inputs = load_eval_inputs(&args.eval)?;
    let results = read_results(&args.eval.results)?;
    let estimates = PoseEstimate::from_rows(&results.rows);
    let bop_sets;
    let mut ctx = EvalContext::new(
        &inputs.annotations,
        &inputs.models,
        &inputs.cameras,
        inputs.dataset.targets.as_deref(),
    )?;
    if args.pattern == PatternSource::Bop {
        bop_sets = bop_patterns(
            &inputs.dataset,
            inputs.models.keys().copied(),
            args.bop_sym_steps,
        )?;
        ctx = ctx.with_pattern_override(&bop_sets);
    }
    let metrics: Vec<ErrorMetric> = args
        .metrics
        .iter()
        .map(|m| match m {
            MetricArg::Mssd => ErrorMetric::Mssd,
            MetricArg::Mspd => ErrorMetric::Mspd,
        })
        .collect();
    let report = metrics::single_pose_report(
        &estimates,
        &ctx,
        &metrics,
        &metrics::DEFAULT_MSSD_FRACTIONS,
        &metrics::DEFAULT_MSPD_PIXELS,
    );
    eprintln!("{:<6} {:>8} {:>12}", "metric", "recall", "object-mean");
    for m in &report.metrics {
        eprintln!(
            "{:<6} {:>8.4} {:>12.4}",
            serde_json::to_value(m.metric)?.as_str().unwrap_or("?"),
            m.recall,
            m.recall_object_mean
        );
    }
    eprintln!(
        "score  {:>8.4}  ({} targets, {} missing)",
        report.score,
        report.n_targets,
        report.missing_targets.len()
    );
    write_json(
        &args.eval.out,
        &json!({ "config": config, "report": report, "rejected_rows": results.rejected }),
    )?;
    Ok(true)
}

fn cmd_eval_dist(args: &EvalDistArgs) -> Result<bool> {
    let config = print_config("eval-dist", args);
    let inputs = load_eval_inputs(&args.eval)?;
    let results = read_results(&args.eval.results)?;
    let estimates = DistributionEstimate::from_rows(&results.rows, args.max_modes);
    let ctx = EvalContext::new(
        &inputs.annotations,
        &inputs.models,
        &inputs.cameras,
        inputs.dataset.targets.as_deref(),
    )?;
    let dist_config = DistConfig {
        clamp: match args.clamp {
            ClampArg::Upper => ClampMode::Upper,
            ClampArg::Literal => ClampMode::Literal,
        },
        ..DistConfig::default()
    };
    let report = metrics::dist_score_report(&estimates, &ctx, &dist_config);
    eprintln!(
        "{:>7} {:>7} {:>7} {:>7}",
        "P_MPD", "R_MPD", "P_MSD", "R_MSD"
    );
    eprintln!(
        "{:>7.1} {:>7.1} {:>7.1} {:>7.1}  ({} targets, {} without estimate)",
        report.p_mpd,
        report.r_mpd,
        report.p_msd,
        report.r_msd,
        report.n_targets,
        report.unmatched_targets.len()
    );
    write_json(
        &args.eval.out,
        &json!({ "config": config, "report": report, "rejected_rows": results.rejected }),
    )?;
    Ok(true)
}

fn cmd_export_viz(args: &ExportVizArgs) -> Result<bool> {
    print_config("export-viz", args);
    let dists = bop::read_annotations(&args.annotations)?;
    let estimates = match &args.results {
        Some(p) => DistributionEstimate::from_rows(&read_results(p)?.rows, args.max_modes),
        None => Vec::new(),
    };
    let paths = bop::export_viz(&args.out, &dists, &estimates)?;
    eprintln!("wrote {} files to {}", paths.len(), args.out.display());
    Ok(true)
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Precompute(a) => cmd_precompute(a),
        Command::Annotate(a) => cmd_annotate(a),
        Command::EvalSingle(a) => cmd_eval_single(a),
        Command::EvalDist(a) => cmd_eval_dist(a),
        Command::ExportViz(a) => cmd_export_viz(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
