//! `gpr-recon`: command-line pipeline for simulated GPR pipe surveys —
//! dataset generation, migration, reconstruction, training, evaluation,
//! noise sweeps, and format export.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

mod manifest;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use gpr_recon_core::autodiff::{load_checkpoint, save_checkpoint};
use gpr_recon_core::bscan::{synthesize_bscan, BScan, BScanConfig};
use gpr_recon_core::cloud::{
    chamfer_distance, l1_nn_distance, read_ply, register_cross_sections, resample, write_ply,
    ChamferVariant, PointCloud,
};
use gpr_recon_core::cross_section::CrossSection;
use gpr_recon_core::dataset::{generate_dataset, load_dataset, DatasetConfig, SceneSample};
use gpr_recon_core::gprnet::{evaluate, noise_sweep, split_dataset, train_gprnet, GprNet,
    GprNetConfig, TrainConfig};
use gpr_recon_core::kinematics::{plan_grid_survey, ScanDirection};
use gpr_recon_core::migration::{backproject, threshold_to_cross_section, MigratedImage};
use gpr_recon_core::scene::{ground_truth_cross_section, ground_truth_dense_cloud, GridSpec,
    Pipe, PipeScene};
use gpr_recon_core::Error as CoreError;

use manifest::Manifest;

#[derive(Parser)]
#[command(name = "gpr-recon", version, about)]
struct Cli {
    /// Line-oriented `key value` config file providing flag defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize B-scans and ground truths for a scene or a random dataset.
    Simulate(SimulateArgs),
    /// Back-projection migration of one B-scan into a cross-section.
    Migrate(MigrateArgs),
    /// B-scans → sparse registered cloud → dense completed cloud.
    Reconstruct(ReconstructArgs),
    /// Train the completion network on a generated dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Evaluate under increasing input noise.
    NoiseSweep(NoiseSweepArgs),
    /// Convert a cross-section grid file to PLY or CSV.
    Export(ExportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scene description file; omit together with `--count` for random
    /// scenes, or use `--demo` for the built-in two-pipe scene.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Use the built-in demo scene (a perpendicular and a parallel pipe).
    #[arg(long)]
    demo: bool,
    /// Dataset mode: generate this many random scenes.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    line_spacing: Option<f64>,
    #[arg(long)]
    trace_spacing: Option<f64>,
    #[arg(long)]
    cell_size: Option<f64>,
}

#[derive(Args)]
struct MigrateArgs {
    #[arg(long)]
    bscan: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    eps_r: Option<f64>,
    #[arg(long)]
    cell_size: Option<f64>,
    /// Imaged depth extent in meters.
    #[arg(long)]
    depth: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Directory of `.gprb` B-scan files (one per survey line).
    #[arg(long)]
    bscans: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Completion-network checkpoint; alternative to `--oracle-bpa`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Skip learned completion: emit the registered cloud resampled dense.
    #[arg(long)]
    oracle_bpa: bool,
    #[arg(long)]
    width_divisor: Option<usize>,
    #[arg(long)]
    eps_r: Option<f64>,
    #[arg(long)]
    cell_size: Option<f64>,
    #[arg(long)]
    depth: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    /// Dense ground-truth PLY; enables the metrics sidecar.
    #[arg(long)]
    gt: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    width_divisor: Option<usize>,
    #[arg(long)]
    val_size: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    /// Input cloud size the model expects.
    #[arg(long)]
    input_points: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    width_divisor: Option<usize>,
    #[arg(long)]
    input_points: Option<usize>,
}

#[derive(Args)]
struct NoiseSweepArgs {
    #[command(flatten)]
    eval: EvalArgs,
    /// Comma-separated noise standard deviations.
    #[arg(long)]
    levels: Option<String>,
}

#[derive(Args)]
struct ExportArgs {
    /// A `.gprc` cross-section or migrated-image file.
    #[arg(long)]
    input: PathBuf,
    /// Output path; `.ply` (binary masks only) or `.csv`.
    #[arg(long)]
    out: PathBuf,
}

enum CmdError {
    Usage(String),
    Core(CoreError),
}

impl From<CoreError> for CmdError {
    fn from(e: CoreError) -> Self {
        CmdError::Core(e)
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Usage(m) => write!(f, "{m}"),
            CmdError::Core(e) => write!(f, "{e}"),
        }
    }
}

fn exit_code(e: &CmdError) -> u8 {
    match e {
        CmdError::Usage(_) => 2,
        CmdError::Core(CoreError::Numerical(_)) => 4,
        CmdError::Core(_) => 3,
    }
}

fn usage(msg: impl Into<String>) -> CmdError {
    CmdError::Usage(msg.into())
}

type CmdResult<T> = std::result::Result<T, CmdError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // keep clap's rendered help/version on stdout, errors on stderr
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(2) };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Key-value defaults loaded from `--config`.
struct FileConfig {
    entries: std::collections::BTreeMap<String, String>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> CmdResult<Self> {
        let mut entries = std::collections::BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path).map_err(CoreError::from)?;
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once(char::is_whitespace).ok_or(
                    CoreError::Parse {
                        line: i + 1,
                        message: format!("expected `key value`, got `{line}`"),
                    },
                )?;
                entries.insert(key.to_string(), value.trim().to_string());
            }
        }
        Ok(FileConfig { entries })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> CmdResult<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| usage(format!("config key `{key}` has invalid value `{v}`"))),
        }
    }
}

/// Flag, then config file, then built-in default.
fn resolve<T: std::str::FromStr + Copy>(
    flag: Option<T>,
    cfg: &FileConfig,
    key: &str,
    default: T,
) -> CmdResult<T> {
    Ok(match flag {
        Some(v) => v,
        None => cfg.get(key)?.unwrap_or(default),
    })
}

fn run(cli: Cli) -> CmdResult<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    let seed = resolve(cli.seed, &cfg, "seed", 0)?;
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a, &cfg, seed),
        Command::Migrate(a) => cmd_migrate(a, &cfg, seed),
        Command::Reconstruct(a) => cmd_reconstruct(a, &cfg, seed),
        Command::Train(a) => cmd_train(a, &cfg, seed),
        Command::Eval(a) => cmd_eval(a, &cfg, seed),
        Command::NoiseSweep(a) => cmd_noise_sweep(a, &cfg, seed),
        Command::Export(a) => cmd_export(a),
    }
}

/// Built-in demo: one pipe perpendicular to the scan lines (crosses all of
/// them) and one parallel pipe (crosses none).
fn demo_scene() -> PipeScene {
    let mut scene = PipeScene::new([2.0, 2.0, 1.0], 9.0).expect("demo slab");
    scene
        .add_pipe(Pipe {
            start: [0.7, 0.0, -0.35],
            end: [0.7, 2.0, -0.35],
            radius: 0.05,
            material: "metal".into(),
        })
        .expect("demo pipe 1");
    scene
        .add_pipe(Pipe {
            start: [0.2, 1.31, -0.5],
            end: [1.8, 1.31, -0.5],
            radius: 0.05,
            material: "pvc".into(),
        })
        .expect("demo pipe 2");
    scene
}

fn cmd_simulate(a: SimulateArgs, cfg: &FileConfig, seed: u64) -> CmdResult<()> {
    let line_spacing = resolve(a.line_spacing, cfg, "line_spacing", 0.2)?;
    let trace_spacing = resolve(a.trace_spacing, cfg, "trace_spacing", 0.02)?;
    let cell_size = resolve(a.cell_size, cfg, "cell_size", 0.02)?;
    std::fs::create_dir_all(&a.out).map_err(CoreError::from)?;
    let started = Instant::now();
    let mut manifest = Manifest::new(
        "simulate",
        seed,
        &format!(
            "line_spacing={line_spacing};trace_spacing={trace_spacing};cell_size={cell_size};count={:?}",
            a.count
        ),
    );

    if let Some(count) = a.count {
        // dataset mode: random scenes with sparse/dense training pairs
        if a.scene.is_some() || a.demo {
            return Err(usage("--count excludes --scene/--demo"));
        }
        let mut dcfg = DatasetConfig::new(count, seed);
        dcfg.line_spacing = line_spacing;
        dcfg.trace_spacing = trace_spacing;
        dcfg.cell_size = cell_size;
        let samples = generate_dataset(&dcfg)?;
        gpr_recon_core::dataset::save_dataset(&samples, &a.out)?;
        write_scene_artifacts(&samples, &dcfg, &a.out, &mut manifest)?;
        manifest.output(&a.out.join("scene_000.txt"));
    } else {
        let scene = match (&a.scene, a.demo) {
            (Some(path), false) => {
                manifest.input(path);
                PipeScene::load(path)?
            }
            (None, true) => demo_scene(),
            (None, false) => return Err(usage("provide --scene, --demo, or --count")),
            (Some(_), true) => return Err(usage("--scene and --demo are mutually exclusive")),
        };
        let sample_out = simulate_one(&scene, line_spacing, trace_spacing, cell_size, seed, &a.out, "")?;
        for p in sample_out {
            manifest.output(&p);
        }
    }
    manifest.timing("total", started.elapsed());
    manifest.write(&a.out.join("manifest.txt"))?;
    Ok(())
}

/// B-scan + ground-truth files for one scene; returns the written paths.
fn simulate_one(
    scene: &PipeScene,
    line_spacing: f64,
    trace_spacing: f64,
    cell_size: f64,
    seed: u64,
    out: &Path,
    prefix: &str,
) -> CmdResult<Vec<PathBuf>> {
    let plan = plan_grid_survey(
        scene.extents[0],
        scene.extents[1],
        line_spacing,
        trace_spacing,
        ScanDirection::AlongX,
    )?;
    let bcfg = BScanConfig::for_scene(scene)?;
    let grid = GridSpec::new(
        (scene.extents[2] / cell_size).round() as usize,
        (scene.extents[0] / cell_size).round() as usize,
        cell_size,
    );
    let mut written = Vec::new();
    for (li, line) in plan.lines.iter().enumerate() {
        let bscan = synthesize_bscan(scene, line, &bcfg)?;
        let bpath = out.join(format!("{prefix}bscan_{li:02}.gprb"));
        bscan.save(&bpath)?;
        written.push(bpath);
        let pose = [line.start[0], line.start[1], 0.0];
        let gt = ground_truth_cross_section(scene, pose, grid);
        let gpath = out.join(format!("{prefix}gt_{li:02}.gprc"));
        gt.save(&gpath)?;
        written.push(gpath);
    }
    let dense = ground_truth_dense_cloud(scene, 8064, seed)?;
    let dpath = out.join(format!("{prefix}dense.ply"));
    write_ply(&dense, &dpath)?;
    written.push(dpath);
    let spath = out.join(format!("{prefix}scene.txt"));
    scene.save(&spath)?;
    written.push(spath);
    Ok(written)
}

/// In dataset mode, also emit per-scene B-scans and cross-section masks.
fn write_scene_artifacts(
    samples: &[SceneSample],
    dcfg: &DatasetConfig,
    out: &Path,
    manifest: &mut Manifest,
) -> CmdResult<()> {
    for (i, s) in samples.iter().enumerate() {
        let plan = plan_grid_survey(
            s.scene.extents[0],
            s.scene.extents[1],
            dcfg.line_spacing,
            dcfg.trace_spacing,
            ScanDirection::AlongX,
        )?;
        let bcfg = BScanConfig::for_scene(&s.scene)?;
        for (li, line) in plan.lines.iter().enumerate() {
            let bscan = synthesize_bscan(&s.scene, line, &bcfg)?;
            let path = out.join(format!("bscan_{i:03}_{li:02}.gprb"));
            bscan.save(&path)?;
            manifest.output(&path);
        }
    }
    Ok(())
}

fn cmd_migrate(a: MigrateArgs, cfg: &FileConfig, seed: u64) -> CmdResult<()> {
    let eps_r = resolve(a.eps_r, cfg, "eps_r", 9.0)?;
    let cell = resolve(a.cell_size, cfg, "cell_size", 0.02)?;
    let depth = resolve(a.depth, cfg, "depth", 1.0)?;
    let threshold = resolve(a.threshold, cfg, "threshold", 0.5)?;
    std::fs::create_dir_all(&a.out).map_err(CoreError::from)?;
    let started = Instant::now();
    let bscan = BScan::load(&a.bscan)?;
    let span = bscan.trace_spacing_m * bscan.traces.saturating_sub(1) as f64;
    let grid = GridSpec::new(
        (depth / cell).round() as usize,
        ((span / cell).round() as usize).max(1),
        cell,
    );
    let image = backproject(&bscan, grid, eps_r)?;
    let mask = threshold_to_cross_section(&image, threshold)?;
    let image_path = a.out.join("image.gprc");
    let mask_path = a.out.join("mask.gprc");
    image.save(&image_path)?;
    mask.save(&mask_path)?;
    let mut manifest = Manifest::new(
        "migrate",
        seed,
        &format!("eps_r={eps_r};cell_size={cell};depth={depth};threshold={threshold}"),
    );
    manifest.input(&a.bscan);
    manifest.output(&image_path);
    manifest.output(&mask_path);
    manifest.timing("total", started.elapsed());
    manifest.write(&a.out.join("manifest.txt"))?;
    Ok(())
}

fn sorted_bscans(dir: &Path) -> CmdResult<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(CoreError::from)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "gprb"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CoreError::invalid(format!("no .gprb files in {}", dir.display())).into());
    }
    Ok(paths)
}

fn cmd_reconstruct(a: ReconstructArgs, cfg: &FileConfig, seed: u64) -> CmdResult<()> {
    if a.checkpoint.is_none() && !a.oracle_bpa {
        return Err(usage("provide --checkpoint or --oracle-bpa"));
    }
    let eps_r = resolve(a.eps_r, cfg, "eps_r", 9.0)?;
    let cell = resolve(a.cell_size, cfg, "cell_size", 0.02)?;
    let depth = resolve(a.depth, cfg, "depth", 1.0)?;
    let threshold = resolve(a.threshold, cfg, "threshold", 0.5)?;
    let width_divisor = resolve(a.width_divisor, cfg, "width_divisor", 4)?;
    std::fs::create_dir_all(&a.out).map_err(CoreError::from)?;
    let started = Instant::now();
    let mut manifest = Manifest::new(
        "reconstruct",
        seed,
        &format!(
            "eps_r={eps_r};cell_size={cell};depth={depth};threshold={threshold};\
             width_divisor={width_divisor};oracle_bpa={}",
            a.oracle_bpa
        ),
    );

    let mut sections = Vec::new();
    for path in sorted_bscans(&a.bscans)? {
        manifest.input(&path);
        let bscan = BScan::load(&path)?;
        let span = bscan.trace_spacing_m * bscan.traces.saturating_sub(1) as f64;
        let grid = GridSpec::new(
            (depth / cell).round() as usize,
            ((span / cell).round() as usize).max(1),
            cell,
        );
        let image = backproject(&bscan, grid, eps_r)?;
        let mask = threshold_to_cross_section(&image, threshold)?;
        if mask.occupied_count() > 0 {
            sections.push(mask);
        }
    }
    if sections.is_empty() {
        return Err(CoreError::invalid("no detections in any B-scan").into());
    }
    let sparse = register_cross_sections(&sections)?;
    let sparse_path = a.out.join("sparse.ply");
    write_ply(&sparse, &sparse_path)?;
    manifest.output(&sparse_path);

    let dense = if let Some(ckpt) = &a.checkpoint {
        manifest.input(ckpt);
        let params = load_checkpoint(ckpt)?;
        let mut ncfg = GprNetConfig::full();
        ncfg.width_divisor = width_divisor;
        let net = GprNet::from_params(ncfg, params)?;
        let input = resample(&sparse, ncfg.input_points, seed)?;
        net.complete(&input)?
    } else {
        // oracle path: densify the registered cloud by resampling
        resample(&sparse, 8064, seed)?
    };
    let dense_path = a.out.join("dense.ply");
    write_ply(&dense, &dense_path)?;
    manifest.output(&dense_path);

    if let Some(gt_path) = &a.gt {
        manifest.input(gt_path);
        let gt = read_ply(gt_path)?;
        let cd = chamfer_distance(&dense, &gt, ChamferVariant::Squared)?.0;
        let l1 = l1_nn_distance(&dense, &gt)?;
        let metrics_path = a.out.join("metrics.txt");
        std::fs::write(
            &metrics_path,
            format!("cd_x1e3 {}\nl1_x100 {}\n", cd * 1e3, l1 * 100.0),
        )
        .map_err(CoreError::from)?;
        manifest.output(&metrics_path);
    }
    manifest.timing("total", started.elapsed());
    manifest.write(&a.out.join("manifest.txt"))?;
    Ok(())
}

/// Dataset samples → (sparse resampled to the model input size, dense).
fn pairs_from(samples: &[SceneSample], input_points: usize, seed: u64) -> CmdResult<Vec<(PointCloud, PointCloud)>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok((
                resample(&s.sparse, input_points, seed ^ (i as u64).wrapping_mul(0x9e37))?,
                s.dense.clone(),
            ))
        })
        .collect()
}

fn cmd_train(a: TrainArgs, cfg: &FileConfig, seed: u64) -> CmdResult<()> {
    let epochs = resolve(a.epochs, cfg, "epochs", 100)?;
    let batch_size = resolve(a.batch_size, cfg, "batch_size", 16)?;
    let learning_rate = resolve(a.learning_rate, cfg, "learning_rate", 5e-5)?;
    let width_divisor = resolve(a.width_divisor, cfg, "width_divisor", 4)?;
    let val_size = resolve(a.val_size, cfg, "val_size", 100)?;
    let test_size = resolve(a.test_size, cfg, "test_size", 150)?;
    let input_points = resolve(a.input_points, cfg, "input_points", 1500)?;
    std::fs::create_dir_all(&a.out).map_err(CoreError::from)?;
    let started = Instant::now();

    let samples = load_dataset(&a.dataset)?;
    let mut ncfg = GprNetConfig::full();
    ncfg.width_divisor = width_divisor;
    ncfg.input_points = input_points;
    let pairs = pairs_from(&samples, ncfg.input_points, seed)?;
    let mut tcfg = TrainConfig::new(epochs, seed);
    tcfg.batch_size = batch_size;
    tcfg.learning_rate = learning_rate;
    tcfg.val_size = val_size;
    tcfg.test_size = test_size;
    tcfg.checkpoint_path = Some(a.out.join("checkpoint.gprn"));
    tcfg.metrics_csv = Some(a.out.join("metrics.csv"));
    let (train, val, _test) = split_dataset(&pairs, &tcfg)?;
    let mut model = GprNet::init(ncfg, seed)?;
    train_gprnet(&mut model, &train, &val, &tcfg)?;
    // make sure a checkpoint exists even if validation never improved
    if !a.out.join("checkpoint.gprn").exists() {
        save_checkpoint(&model.params, &a.out.join("checkpoint.gprn"))?;
    }

    let mut manifest = Manifest::new(
        "train",
        seed,
        &format!(
            "epochs={epochs};batch_size={batch_size};learning_rate={learning_rate};\
             width_divisor={width_divisor};val_size={val_size};test_size={test_size};\
             input_points={input_points}"
        ),
    );
    manifest.input(&a.dataset);
    manifest.output(&a.out.join("checkpoint.gprn"));
    manifest.output(&a.out.join("metrics.csv"));
    manifest.timing("total", started.elapsed());
    manifest.write(&a.out.join("manifest.txt"))?;
    Ok(())
}

fn load_model(a: &EvalArgs, cfg: &FileConfig) -> CmdResult<GprNet> {
    let width_divisor = resolve(a.width_divisor, cfg, "width_divisor", 4)?;
    let input_points = resolve(a.input_points, cfg, "input_points", 1500)?;
    let params = load_checkpoint(&a.checkpoint)?;
    let mut ncfg = GprNetConfig::full();
    ncfg.width_divisor = width_divisor;
    ncfg.input_points = input_points;
    Ok(GprNet::from_params(ncfg, params)?)
}

fn cmd_eval(a: EvalArgs, cfg: &FileConfig, seed: u64) -> CmdResult<()> {
    std::fs::create_dir_all(&a.out).map_err(CoreError::from)?;
    let started = Instant::now();
    let model = load_model(&a, cfg)?;
    let samples = load_dataset(&a.dataset)?;
    let pairs = pairs_from(&samples, model.config.input_points, seed)?;
    let report = evaluate(&model, &pairs)?;
    let mut csv = String::from("sample,cd_x1e3,l1_x100\n");
    for (i, (cd, l1)) in report.per_sample.iter().enumerate() {
        let _ = writeln!(csv, "{i},{cd},{l1}");
    }
    let _ = writeln!(csv, "mean,{},{}", report.mean_cd_x1e3, report.mean_l1_x100);
    let report_path = a.out.join("report.csv");
    std::fs::write(&report_path, csv).map_err(CoreError::from)?;
    println!(
        "mean cd_x1e3 {} l1_x100 {}",
        report.mean_cd_x1e3, report.mean_l1_x100
    );
    let mut manifest = Manifest::new("eval", seed, "");
    manifest.input(&a.dataset);
    manifest.input(&a.checkpoint);
    manifest.output(&report_path);
    manifest.timing("total", started.elapsed());
    manifest.write(&a.out.join("manifest.txt"))?;
    Ok(())
}

fn cmd_noise_sweep(a: NoiseSweepArgs, cfg: &FileConfig, seed: u64) -> CmdResult<()> {
    let levels: Vec<f64> = match a.levels.or(cfg.get::<String>("levels")?) {
        None => vec![0.05, 0.1, 0.2, 0.5],
        Some(text) => text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| usage(format!("bad noise level `{s}`")))
            })
            .collect::<CmdResult<_>>()?,
    };
    std::fs::create_dir_all(&a.eval.out).map_err(CoreError::from)?;
    let started = Instant::now();
    let model = load_model(&a.eval, cfg)?;
    let samples = load_dataset(&a.eval.dataset)?;
    let pairs = pairs_from(&samples, model.config.input_points, seed)?;
    let rows = noise_sweep(&model, &pairs, &levels, seed)?;
    let mut csv = String::from("noise_std,mean_cd_x1e3\n");
    for (sigma, cd) in &rows {
        let _ = writeln!(csv, "{sigma},{cd}");
    }
    let sweep_path = a.eval.out.join("sweep.csv");
    std::fs::write(&sweep_path, csv).map_err(CoreError::from)?;
    let mut manifest = Manifest::new(
        "noise-sweep",
        seed,
        &format!("levels={levels:?}"),
    );
    manifest.input(&a.eval.dataset);
    manifest.input(&a.eval.checkpoint);
    manifest.output(&sweep_path);
    manifest.timing("total", started.elapsed());
    manifest.write(&a.eval.out.join("manifest.txt"))?;
    Ok(())
}

fn cmd_export(a: ExportArgs) -> CmdResult<()> {
    let ext = a
        .out
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase();
    match ext.as_str() {
        "ply" => {
            let mask = CrossSection::load(&a.input)?;
            let cloud = register_cross_sections(&[mask])?;
            write_ply(&cloud, &a.out)?;
        }
        "csv" => {
            // masks and f32 energy grids both export as H rows of W values
            let (h, w, values) = match CrossSection::load(&a.input) {
                Ok(mask) => (
                    mask.height,
                    mask.width,
                    mask.cells.iter().map(|&c| c as f64).collect::<Vec<_>>(),
                ),
                Err(_) => {
                    let img = MigratedImage::load(&a.input)?;
                    (img.height, img.width, img.values)
                }
            };
            let mut csv = String::new();
            for row in 0..h {
                let cells: Vec<String> = (0..w)
                    .map(|col| values[row * w + col].to_string())
                    .collect();
                let _ = writeln!(csv, "{}", cells.join(","));
            }
            std::fs::write(&a.out, csv).map_err(CoreError::from)?;
        }
        other => return Err(usage(format!("unsupported export extension `{other}`"))),
    }
    Ok(())
}
