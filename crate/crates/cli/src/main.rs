use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use loopcal_cli::commands;
use loopcal_cli::config::{EstimatorKind, RunConfig};

const PRECEDENCE: &str = "\
Settings are resolved in order: built-in defaults, then command-line flags, \
then --config. A config file is TOML or JSON with the keys of a run manifest's \
\"config\" section (seed, scenario, estimator, pairs, weights, jobs, frames, step, \
runs, aggregation, multiframe, budget, starts, max_source_points, radar_points, \
scene); passing a manifest.json written by a previous run replays that run.";

#[derive(Parser)]
#[command(name = "loopcal", version, about = "Camera/lidar/radar extrinsic calibration experiments", after_help = PRECEDENCE)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    /// single | iterative | rigid-iterative | rigid-full
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorKind>,
    /// Loop-closure weight of the joint estimator.
    #[arg(long)]
    lambda: Option<f64>,
    /// Worker threads (0: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// TOML/JSON config or manifest, applied after the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene sequence.
    GenScene {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Apply a random miscalibration to a generated sequence.
    Perturb {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Estimate extrinsics and report errors.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Random miscalibrations to evaluate (ignored for perturbed input).
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Recompute errors and summaries from a calibrate output directory.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw lidar and radar overlays on the camera depth image.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Calibrate output directory whose run-0 predictions to draw.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
}

impl Common {
    fn resolve(&self, edit: impl FnOnce(&mut RunConfig)) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = &self.scenario {
            cfg.scenario = s.clone();
        }
        if let Some(e) = self.estimator {
            cfg.estimator = e;
        }
        if let Some(l) = self.lambda {
            cfg.weights.lambda = l;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        edit(&mut cfg);
        if let Some(path) = &self.config {
            cfg = cfg.overlay_file(path)?;
        }
        cfg.validate()?;
        if cfg.jobs > 0 {
            rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global()?;
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenScene { common, frames } => {
            let cfg = common.resolve(|c| {
                if let Some(f) = frames {
                    c.frames = f;
                }
            })?;
            commands::gen_scene(&cfg, &common.out)
        }
        Command::Perturb { common, input } => commands::perturb(&common.resolve(|_| {})?, &input, &common.out),
        Command::Calibrate { common, input, runs } => {
            let cfg = common.resolve(|c| {
                if let Some(r) = runs {
                    c.runs = r;
                }
            })?;
            commands::calibrate(&cfg, &input, &common.out)
        }
        Command::Evaluate { input, out } => commands::evaluate(&input, &out),
        Command::Render { common, input, predictions } => {
            commands::render(&common.resolve(|_| {})?, &input, predictions.as_deref(), &common.out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
