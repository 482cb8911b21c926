use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use protogs::io::{generate_synthetic_scene, read_ply, write_ply, write_png, PlyPrecision, SceneBundle, SyntheticSpec};
use protogs::{compress, render_image, train, Error, PrimitiveSet, TrainMode, TrainOutcome, TrainingConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

/// Fit, compress, render and evaluate Gaussian splatting scenes.
///
/// Exit codes: 0 success, 1 failure, 2 usage error or missing input,
/// 3 training diverged (the state at divergence is written next to the
/// other outputs as diverged.ply).
#[derive(Parser)]
#[command(name = "protogs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scene directory (cameras.json, images/, sparse/).
    Synth(SynthArgs),
    /// Optimize primitives from the scene's SfM points.
    ///
    /// Writes <out>/fit.ply, <out>/log.csv and <out>/config.toml and prints
    /// a summary line.
    Fit(FitArgs),
    /// Replace a fitted PLY by prototypes.
    ///
    /// Writes <out>/compressed.ply, <out>/log.csv and appends one row to
    /// <out>/rd.csv with columns mode,seed,ratio,n_in,n_out,psnr,ssim,bytes.
    Compress(CompressArgs),
    /// Render views of a PLY to <out>/view_NNN.png.
    Render(RenderArgs),
    /// Evaluate a PLY against scene images; writes view,psnr,ssim rows.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SceneArgs {
    /// Scene directory.
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    scene: Option<PathBuf>,
    /// Use the built-in synthetic scene instead of a directory.
    #[arg(long)]
    synthetic: bool,
    /// Seed of the built-in synthetic scene.
    #[arg(long, default_value_t = 0)]
    scene_seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML training config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the initial compression ratio.
    #[arg(long)]
    ratio: Option<f64>,
    /// fit_only, rendering_guided or two_stage; overrides the config.
    #[arg(long)]
    mode: Option<TrainMode>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of ground-truth primitives.
    #[arg(long, default_value_t = SyntheticSpec::default().primitives)]
    primitives: usize,
    /// Number of camera views.
    #[arg(long, default_value_t = SyntheticSpec::default().views)]
    views: usize,
    /// Image width and height in pixels.
    #[arg(long, default_value_t = SyntheticSpec::default().width)]
    size: usize,
    /// Number of SfM points written to sparse/points3D.txt.
    #[arg(long, default_value_t = SyntheticSpec::default().sfm_points)]
    sfm_points: usize,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompressArgs {
    /// Fitted PLY to compress.
    input: PathBuf,
    #[command(flatten)]
    scene: SceneArgs,
    #[command(flatten)]
    train: TrainArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    input: PathBuf,
    #[command(flatten)]
    scene: SceneArgs,
    /// Comma-separated camera indices (default: holdout views, or all views
    /// when the scene has none).
    #[arg(long, value_delimiter = ',')]
    views: Vec<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    input: PathBuf,
    #[command(flatten)]
    scene: SceneArgs,
    /// Comma-separated camera indices (default as for render).
    #[arg(long, value_delimiter = ',')]
    views: Vec<usize>,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

/// Bad invocation or missing input.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug)]
struct Diverged {
    message: String,
    dump: PathBuf,
}

impl fmt::Display for Diverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}; state written to {}", self.message, self.dump.display())
    }
}

impl std::error::Error for Diverged {}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Usage(format!("{what} {} does not exist", path.display())).into());
    }
    Ok(())
}

fn load_scene(args: &SceneArgs) -> Result<SceneBundle> {
    match &args.scene {
        Some(dir) => {
            require(dir, "scene directory")?;
            SceneBundle::load(dir).with_context(|| format!("loading scene {}", dir.display()))
        }
        None => Ok(generate_synthetic_scene(&SyntheticSpec::default(), args.scene_seed)?.1),
    }
}

fn load_config(args: &TrainArgs) -> Result<TrainingConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            require(path, "config")?;
            TrainingConfig::load(path).map_err(|e| Usage(e.to_string()))?
        }
        None => TrainingConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(ratio) = args.ratio {
        cfg.compression_ratio = ratio;
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode;
    }
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(cfg)
}

fn load_ply(path: &Path) -> Result<PrimitiveSet> {
    require(path, "input")?;
    read_ply(path).with_context(|| format!("reading {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Maps a divergence to an error carrying the dump location.
fn run_training(out: &Path, result: protogs::Result<TrainOutcome>) -> Result<TrainOutcome> {
    match result {
        Err(Error::Diverged { iteration, reason, state }) => {
            let dump = out.join("diverged.ply");
            write_ply(&dump, &state, PlyPrecision::F64)?;
            Err(Diverged {
                message: format!("training diverged at iteration {iteration}: {reason}"),
                dump,
            }
            .into())
        }
        other => Ok(other?),
    }
}

fn mode_name(mode: TrainMode) -> &'static str {
    match mode {
        TrainMode::FitOnly => "fit_only",
        TrainMode::RenderingGuided => "rendering_guided",
        TrainMode::TwoStage => "two_stage",
    }
}

fn write_config(out: &Path, cfg: &TrainingConfig) -> Result<()> {
    let path = out.join("config.toml");
    fs::write(&path, cfg.to_toml_string()?).with_context(|| format!("writing {}", path.display()))
}

fn synth(args: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        primitives: args.primitives,
        views: args.views,
        width: args.size,
        height: args.size,
        sfm_points: args.sfm_points,
        ..SyntheticSpec::default()
    };
    let (truth, bundle) = generate_synthetic_scene(&spec, args.seed)?;
    create_dir(&args.out)?;
    bundle.save(&args.out)?;
    write_ply(&args.out.join("ground_truth.ply"), &truth, PlyPrecision::F64)?;
    println!(
        "synth views={} train={} holdout={} sfm_points={}",
        bundle.cameras.len(),
        bundle.train.len(),
        bundle.holdout.len(),
        bundle.sfm_points.len()
    );
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let mut cfg = load_config(&args.train)?;
    if args.train.mode.is_none() && args.train.config.is_none() {
        cfg.mode = TrainMode::FitOnly;
    }
    let bundle = load_scene(&args.scene)?;
    create_dir(&args.out)?;
    write_config(&args.out, &cfg)?;
    let outcome = run_training(&args.out, train(&bundle, &cfg, None))?;
    write_ply(&args.out.join("fit.ply"), &outcome.set, PlyPrecision::F64)?;
    protogs::io::logs::write_csv(&args.out.join("log.csv"), &outcome.log)?;
    println!(
        "fit mode={} seed={} n={} psnr={:.4} ssim={:.5}",
        mode_name(cfg.mode),
        cfg.seed,
        outcome.set.len(),
        outcome.holdout.psnr,
        outcome.holdout.ssim
    );
    Ok(())
}

#[derive(Serialize)]
struct RdRow {
    mode: &'static str,
    seed: u64,
    ratio: f64,
    n_in: usize,
    n_out: usize,
    psnr: f64,
    ssim: f64,
    bytes: u64,
}

fn compress_cmd(args: CompressArgs) -> Result<()> {
    let mut cfg = load_config(&args.train)?;
    if cfg.mode == TrainMode::FitOnly {
        return Err(Usage("compress needs --mode rendering_guided or two_stage".into()).into());
    }
    let input = load_ply(&args.input)?;
    if args.train.config.is_none() {
        cfg.sh_degree = input.sh_degree;
    }
    let bundle = load_scene(&args.scene)?;
    create_dir(&args.out)?;
    write_config(&args.out, &cfg)?;
    let n_in = input.len();
    let outcome = run_training(&args.out, compress(&bundle, &cfg, input))?;
    let ply = args.out.join("compressed.ply");
    write_ply(&ply, &outcome.set, PlyPrecision::F64)?;
    protogs::io::logs::write_csv(&args.out.join("log.csv"), &outcome.log)?;
    let row = RdRow {
        mode: mode_name(cfg.mode),
        seed: cfg.seed,
        ratio: cfg.final_ratio(),
        n_in,
        n_out: outcome.set.len(),
        psnr: outcome.holdout.psnr,
        ssim: outcome.holdout.ssim,
        bytes: fs::metadata(&ply)?.len(),
    };
    protogs::io::logs::append_csv(&args.out.join("rd.csv"), &row)?;
    println!(
        "compress mode={} seed={} ratio={} n_in={} n_out={} psnr={:.4} ssim={:.5} bytes={}",
        row.mode, row.seed, row.ratio, row.n_in, row.n_out, row.psnr, row.ssim, row.bytes
    );
    Ok(())
}

fn select_views(bundle: &SceneBundle, views: &[usize]) -> Result<Vec<usize>> {
    if let Some(&v) = views.iter().find(|&&v| v >= bundle.cameras.len()) {
        return Err(Usage(format!("view {v} out of range (scene has {} cameras)", bundle.cameras.len())).into());
    }
    Ok(match (views.is_empty(), bundle.holdout.is_empty()) {
        (false, _) => views.to_vec(),
        (true, false) => bundle.holdout.clone(),
        (true, true) => (0..bundle.cameras.len()).collect(),
    })
}

fn render_cmd(args: RenderArgs) -> Result<()> {
    let set = load_ply(&args.input)?;
    let bundle = load_scene(&args.scene)?;
    let views = select_views(&bundle, &args.views)?;
    create_dir(&args.out)?;
    let opts = bundle.render_options();
    for v in views {
        let img = render_image(&set, &bundle.cameras[v], &opts)?;
        write_png(&args.out.join(format!("view_{v:03}.png")), &img)?;
    }
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let set = load_ply(&args.input)?;
    let bundle = load_scene(&args.scene)?;
    let views = select_views(&bundle, &args.views)?;
    let report = bundle.report(&set, &views)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    protogs::io::logs::write_csv(&args.out, &report.per_view)?;
    println!("eval views={} psnr={:.4} ssim={:.5}", views.len(), report.psnr, report.ssim);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Fit(a) => fit(a),
        Command::Compress(a) => compress_cmd(a),
        Command::Render(a) => render_cmd(a),
        Command::Eval(a) => eval_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Diverged>() {
                ExitCode::from(EXIT_DIVERGED)
            } else if e.is::<Usage>() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
    }
}
