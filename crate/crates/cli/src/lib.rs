//! The `perspcam` command line: dataset generation, camera solving,
//! evaluation, distortion curves and an end-to-end round trip.
//!
//! Machine-readable results go to files; standard output carries a short
//! human summary. Option values resolve as command-line flag, then
//! environment (`PERSPCAM_SEED`, `PERSPCAM_THREADS`), then `--config` file,
//! then built-in default.

pub mod config;
mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use perspcam::body_model::{load_model, make_default_model, read_obj, synthesize, BodyModel, Pose, Shape, DEFAULT_RINGS, DEFAULT_SEGMENTS};
use perspcam::metrics::{evaluate_dataset, miou, MetricReport, Prediction};
use perspcam::precision::{fmt_sig, to_json_line, to_json_pretty};
use perspcam::projection::distortion_magnitude;
use perspcam::rasterizer::{rasterize, read_pgm};
use perspcam::scenegen::{generate_dataset, mask_file, read_manifest, GenConfig, Manifest, MANIFEST_FILE};
use perspcam::solver::{refine_tz, solve_camera, CameraSolveConfig, CameraSolveResult};

pub use config::{resolve, ConfigFile};
pub use output::OutputGuard;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

pub const BUILTIN_MODEL: &str = "builtin";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] perspcam::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(perspcam::Error::SolverDiverged { .. }) => EXIT_NUMERICAL,
            CliError::Core(_) => EXIT_DATA,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(perspcam::Error::Io { path: path.to_path_buf(), source: e })
}

#[derive(Debug, Parser)]
#[command(name = "perspcam", version, about = "Perspective camera recovery from body silhouettes")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Worker threads for generation, solving and evaluation (0 = all cores).
    #[arg(long, global = true, env = "PERSPCAM_THREADS")]
    pub threads: Option<usize>,
    /// Flat `key = value` file supplying defaults for any long option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log filter, e.g. `warn`, `info`, `debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (masks plus a JSON-lines manifest).
    Gen(GenArgs),
    /// Recover the camera aligning a mesh to one target mask.
    Solve(SolveArgs),
    /// Evaluate predictions against a generated dataset.
    Eval(EvalArgs),
    /// Tabulate perspective distortion of the body against depth.
    Distortion(DistortionArgs),
    /// Generate scenes, solve each from its true depth, and evaluate.
    Roundtrip(RoundtripArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    /// Number of records.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, env = "PERSPCAM_SEED")]
    pub seed: Option<u64>,
    /// Square image size in pixels.
    #[arg(long)]
    pub size: Option<u32>,
    /// Body model JSON file (default: the built-in procedural body).
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub sigma_px: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub convergence_tol: Option<f64>,
    /// Continue with Tz free after the (f, Tx, Ty) solve.
    #[arg(long)]
    pub refine_tz: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    /// Pelvis-centered mesh (OBJ).
    #[arg(long)]
    pub mesh: PathBuf,
    /// Target mask (binary PGM).
    #[arg(long)]
    pub mask: PathBuf,
    /// Initial pelvis depth, meters.
    #[arg(long)]
    pub tz: f64,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Result JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Dataset directory or its manifest file.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Predictions, JSON lines with id, f_px, t and optional shape/pose.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Body model JSON (default: the one named in the manifest, else built-in).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output directory for report.csv and report.json.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct DistortionArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub tz_min: Option<f64>,
    #[arg(long)]
    pub tz_max: Option<f64>,
    /// Number of log-spaced depths.
    #[arg(long)]
    pub points: Option<usize>,
    /// CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RoundtripArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output directory (dataset/, predictions.jsonl, report.csv, report.json).
    #[arg(long)]
    pub out: PathBuf,
}

const GLOBAL_KEYS: [&str; 2] = ["threads", "log_level"];
const SCENE_KEYS: [&str; 4] = ["n", "seed", "size", "model"];
const SOLVER_KEYS: [&str; 4] = ["sigma_px", "max_iters", "convergence_tol", "refine_tz"];

fn check_keys(config: &ConfigFile, groups: &[&[&str]]) -> Result<(), CliError> {
    let known: Vec<&str> = GLOBAL_KEYS.iter().chain(groups.iter().flat_map(|g| g.iter())).copied().collect();
    config.check_keys(&known)
}

fn load_body_model(path: Option<&Path>) -> Result<(BodyModel, String), CliError> {
    match path {
        Some(p) => Ok((load_model(p)?, p.display().to_string())),
        None => Ok((make_default_model(DEFAULT_SEGMENTS, DEFAULT_RINGS)?, BUILTIN_MODEL.to_string())),
    }
}

fn gen_config(scene: &SceneArgs, config: &ConfigFile) -> Result<(GenConfig, Option<PathBuf>), CliError> {
    let defaults = GenConfig::default();
    let size = resolve(scene.size, config, "size", defaults.width)?;
    let cfg = GenConfig {
        n_records: resolve(scene.n, config, "n", defaults.n_records)?,
        global_seed: resolve(scene.seed, config, "seed", defaults.global_seed)?,
        width: size,
        height: size,
        ..defaults
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let model = match &scene.model {
        Some(p) => Some(p.clone()),
        None => config.get::<PathBuf>("model")?,
    };
    Ok((cfg, model))
}

fn solver_config(args: &SolverArgs, config: &ConfigFile) -> Result<(CameraSolveConfig, bool), CliError> {
    let d = CameraSolveConfig::default();
    let cfg = CameraSolveConfig {
        sigma_px: resolve(args.sigma_px, config, "sigma_px", d.sigma_px)?,
        max_iters: resolve(args.max_iters, config, "max_iters", d.max_iters)?,
        convergence_tol: resolve(args.convergence_tol, config, "convergence_tol", d.convergence_tol)?,
        ..d
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let refine = args.refine_tz || config.get::<bool>("refine_tz")?.unwrap_or(false);
    Ok((cfg, refine))
}

/// What a finished subcommand reports on standard output.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub lines: Vec<String>,
}

/// Parses `args` (program name first) and runs the subcommand. Returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.global.log_level).format_timestamp(None).try_init();
    match execute(&cli) {
        Ok(summary) => {
            for line in summary.lines {
                println!("{line}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command inside a worker pool of the requested size.
pub fn execute(cli: &Cli) -> Result<Summary, CliError> {
    let config = match &cli.global.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let threads = resolve(cli.global.threads, &config, "threads", 0usize)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Gen(a) => cmd_gen(a, &config),
        Command::Solve(a) => cmd_solve(a, &config),
        Command::Eval(a) => cmd_eval(a, &config),
        Command::Distortion(a) => cmd_distortion(a, &config),
        Command::Roundtrip(a) => cmd_roundtrip(a, &config),
    })
}

pub fn cmd_gen(args: &GenArgs, config: &ConfigFile) -> Result<Summary, CliError> {
    check_keys(config, &[&SCENE_KEYS])?;
    let (cfg, model_path) = gen_config(&args.scene, config)?;
    let (model, source) = load_body_model(model_path.as_deref())?;
    let mut guard = OutputGuard::new(&args.out)?;
    guard.track(args.out.join(MANIFEST_FILE));
    guard.track(args.out.join(perspcam::scenegen::MASK_DIR));
    let manifest = generate_dataset(&cfg, &model, &source, &args.out)?;
    guard.commit();
    Ok(Summary {
        lines: vec![format!(
            "generated {} record(s), {} skipped, into {}",
            manifest.records.len(),
            manifest.header.gaps.len(),
            args.out.display()
        )],
    })
}

#[derive(serde::Serialize)]
struct SolveOutput {
    f_px: f64,
    tx_m: f64,
    ty_m: f64,
    tz_m: f64,
    /// Soft IoU of the smoothed silhouettes at the solution.
    iou: f64,
    iters: usize,
    converged: bool,
}

fn solve_one(
    mesh: &perspcam::Mesh,
    target: &perspcam::SilhouetteMask,
    tz: f64,
    cfg: &CameraSolveConfig,
    refine: bool,
) -> perspcam::Result<CameraSolveResult> {
    let first = solve_camera(mesh, target, tz, cfg)?;
    if refine {
        let refined = refine_tz(mesh, target, &first, cfg)?;
        Ok(CameraSolveResult { iters_used: first.iters_used + refined.iters_used, ..refined })
    } else {
        Ok(first)
    }
}

pub fn cmd_solve(args: &SolveArgs, config: &ConfigFile) -> Result<Summary, CliError> {
    check_keys(config, &[&SOLVER_KEYS])?;
    let (cfg, refine) = solver_config(&args.solver, config)?;
    let mesh = read_obj(&args.mesh)?;
    let target = read_pgm(&args.mask)?;
    let r = solve_one(&mesh, &target, args.tz, &cfg, refine)?;
    let out = SolveOutput {
        f_px: r.f_px,
        tx_m: r.tx,
        ty_m: r.ty,
        tz_m: r.tz,
        iou: r.soft_iou(),
        iters: r.iters_used,
        converged: r.converged,
    };
    let mut guard = OutputGuard::for_file(&args.out)?;
    output::write_text(&args.out, &(to_json_pretty(&out).map_err(json_err)? + "\n"))?;
    guard.commit();
    Ok(Summary {
        lines: vec![format!(
            "f = {} px, T = ({}, {}, {}) m, soft IoU {}, {} iterations{}",
            fmt_sig(r.f_px),
            fmt_sig(r.tx),
            fmt_sig(r.ty),
            fmt_sig(r.tz),
            fmt_sig(out.iou),
            r.iters_used,
            if r.converged { "" } else { " (not converged)" }
        )],
    })
}

fn json_err(e: serde_json::Error) -> CliError {
    CliError::Usage(format!("serialization failed: {e}"))
}

fn manifest_location(path: &Path) -> (PathBuf, PathBuf) {
    if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    } else {
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
    }
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                CliError::Core(perspcam::Error::Parse { context: path.display().to_string(), message: format!("line {}: {e}", i + 1) })
            })
        })
        .collect()
}

fn write_report(report: &MetricReport, dir: &Path, guard: &mut OutputGuard) -> Result<(), CliError> {
    let csv = dir.join("report.csv");
    let json = dir.join("report.json");
    guard.track(csv.clone());
    guard.track(json.clone());
    output::write_text(&csv, &report.to_csv())?;
    output::write_text(&json, &(to_json_pretty(report).map_err(json_err)? + "\n"))?;
    Ok(())
}

fn report_lines(report: &MetricReport) -> Vec<String> {
    vec![
        format!("evaluated {} record(s), {} without prediction", report.rows.len(), report.warnings),
        format!(
            "median E_f {}  E_Txy {} m  E_Tz {} m  mIoU {} %",
            fmt_sig(report.median.e_f),
            fmt_sig(report.median.e_txy),
            fmt_sig(report.median.e_tz),
            fmt_sig(report.median.miou_pct)
        ),
    ]
}

fn model_for_manifest(explicit: Option<&Path>, manifest: &Manifest, dataset_dir: &Path) -> Result<BodyModel, CliError> {
    if let Some(p) = explicit {
        return Ok(load_model(p)?);
    }
    if manifest.header.model == BUILTIN_MODEL {
        return Ok(load_body_model(None)?.0);
    }
    let named = PathBuf::from(&manifest.header.model);
    let path = if named.is_absolute() || named.exists() { named } else { dataset_dir.join(named) };
    Ok(load_model(&path)?)
}

pub fn cmd_eval(args: &EvalArgs, config: &ConfigFile) -> Result<Summary, CliError> {
    check_keys(config, &[&["model"]])?;
    let (dir, manifest_path) = manifest_location(&args.manifest);
    let manifest = read_manifest(&manifest_path)?;
    let explicit = match &args.model {
        Some(p) => Some(p.clone()),
        None => config.get::<PathBuf>("model")?,
    };
    let model = model_for_manifest(explicit.as_deref(), &manifest, &dir)?;
    let predictions = read_predictions(&args.predictions)?;
    let report = evaluate_dataset(&model, &manifest.records, &predictions, Some(&dir))?;
    let mut guard = OutputGuard::new(&args.out)?;
    write_report(&report, &args.out, &mut guard)?;
    guard.commit();
    Ok(Summary { lines: report_lines(&report) })
}

/// `points` depths log-spaced over `[lo, hi]`, both ends included.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect()
}

pub fn cmd_distortion(args: &DistortionArgs, config: &ConfigFile) -> Result<Summary, CliError> {
    check_keys(config, &[&["model", "tz_min", "tz_max", "points"]])?;
    let lo = resolve(args.tz_min, config, "tz_min", 0.3)?;
    let hi = resolve(args.tz_max, config, "tz_max", 10.0)?;
    let points = resolve(args.points, config, "points", 25usize)?;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || points == 0 {
        return Err(CliError::Usage(format!("need 0 < tz_min <= tz_max and points >= 1, got {lo}, {hi}, {points}")));
    }
    let model_path = match &args.model {
        Some(p) => Some(p.clone()),
        None => config.get::<PathBuf>("model")?,
    };
    let (model, _) = load_body_model(model_path.as_deref())?;
    let mesh = synthesize(&model, &Shape::zeros(model.shape_count()), &Pose::zeros(model.joint_count()))?;
    let grid = log_grid(lo, hi, points);
    let mut csv = String::from("tz_m,distortion\n");
    for tz in &grid {
        csv.push_str(&format!("{},{}\n", fmt_sig(*tz), fmt_sig(distortion_magnitude(&mesh, *tz)?)));
    }
    let mut guard = OutputGuard::for_file(&args.out)?;
    output::write_text(&args.out, &csv)?;
    guard.commit();
    Ok(Summary { lines: vec![format!("wrote {} depths to {}", grid.len(), args.out.display())] })
}

/// Solves every record from its true depth; records whose target is unusable are left without prediction.
pub fn solve_dataset(
    model: &BodyModel,
    manifest: &Manifest,
    dataset_dir: &Path,
    cfg: &CameraSolveConfig,
    refine: bool,
) -> Result<Vec<Prediction>, CliError> {
    let solved: Vec<Result<Option<Prediction>, perspcam::Error>> = manifest
        .records
        .par_iter()
        .map(|record| {
            let mesh = record.mesh(model)?;
            let target = read_pgm(&mask_file(dataset_dir, record))?;
            match solve_one(&mesh, &target, record.t.tz, cfg, refine) {
                Ok(r) => {
                    let iou = rasterize(&mesh, &record.camera.with_focal(r.f_px), &r.params().translation())
                        .and_then(|m| miou(&m, &target))
                        .unwrap_or(0.0);
                    log::info!("record {}: f {:.2} px, mIoU {:.2}, {} iterations", record.id, r.f_px, iou, r.iters_used);
                    Ok(Some(Prediction { id: record.id.clone(), f_px: r.f_px, t: [r.tx, r.ty, r.tz], shape: None, pose: None }))
                }
                Err(perspcam::Error::InvalidArgument(msg)) => {
                    log::warn!("record {}: not solved: {msg}", record.id);
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut predictions = Vec::new();
    for p in solved {
        predictions.extend(p?);
    }
    Ok(predictions)
}

pub fn cmd_roundtrip(args: &RoundtripArgs, config: &ConfigFile) -> Result<Summary, CliError> {
    check_keys(config, &[&SCENE_KEYS, &SOLVER_KEYS])?;
    let (gen, model_path) = gen_config(&args.scene, config)?;
    let (solve_cfg, refine) = solver_config(&args.solver, config)?;
    let (model, source) = load_body_model(model_path.as_deref())?;

    let mut guard = OutputGuard::new(&args.out)?;
    let dataset_dir = args.out.join("dataset");
    guard.track(dataset_dir.clone());
    let manifest = generate_dataset(&gen, &model, &source, &dataset_dir)?;
    let predictions = solve_dataset(&model, &manifest, &dataset_dir, &solve_cfg, refine)?;

    let pred_path = args.out.join("predictions.jsonl");
    guard.track(pred_path.clone());
    let mut text = String::new();
    for p in &predictions {
        text.push_str(&to_json_line(p).map_err(json_err)?);
        text.push('\n');
    }
    output::write_text(&pred_path, &text)?;

    // Rounded predictions as written are what gets evaluated.
    let predictions = read_predictions(&pred_path)?;
    let report = evaluate_dataset(&model, &manifest.records, &predictions, Some(&dataset_dir))?;
    write_report(&report, &args.out, &mut guard)?;
    guard.commit();

    let mut lines = report_lines(&report);
    if manifest.records.is_empty() {
        lines = vec!["no records generated; empty report written".to_string()];
    }
    Ok(Summary { lines })
}
