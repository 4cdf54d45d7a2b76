//! `trajsampler` command line: toy data generation, training, sampling,
//! evaluation and figures.

mod commands;
mod config;
mod data;
mod plot;
mod samples;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trajsampler::{Error, ErrorClass};

use crate::config::{parse_override, RunConfig};

#[derive(Parser)]
#[command(name = "trajsampler", version, about = "Multi-modal pedestrian trajectory sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Precedence: defaults, `--config`,
/// the dedicated flags, then `--set` in order.
#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Flat key-value config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed for every random stream of the run.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; the resolved config is written here.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// `toy`, or a directory with trajectory files.
    #[arg(long)]
    data: Option<String>,
    /// Arithmetic precision: f32 or f64.
    #[arg(long)]
    precision: Option<String>,
    /// Override any config key, e.g. `--set train.batch_size=32`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    set: Vec<(String, String)>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the toy trajectory table and its mode labels.
    GenToy {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model; writes checkpoints, snapshots and train.log.
    Train {
        #[command(flatten)]
        common: Common,
        /// Loss wiring: infogan, vanilla, l2, variety, unrolled or info_unrolled.
        #[arg(long)]
        regime: Option<String>,
        #[arg(long)]
        iterations: Option<u64>,
        /// Continue from this checkpoint.
        #[arg(long, value_name = "CKPT")]
        resume: Option<PathBuf>,
    },
    /// Sample futures for every scene; writes samples.txt and samples.meta.tsv.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "CKPT")]
        checkpoint: Option<PathBuf>,
        /// Trajectory file whose observation windows are completed.
        #[arg(long, value_name = "PATH")]
        scenes: Option<PathBuf>,
        #[arg(long)]
        n_samples: Option<usize>,
    },
    /// Best-of-K ADE/FDE, 1-NN accuracy and EMD; writes report.txt and scenes.tsv.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// A checkpoint, or a training directory to score every snapshot into series.tsv.
        #[arg(long, value_name = "CKPT|DIR")]
        checkpoint: Option<PathBuf>,
        /// Reference predictor instead of a checkpoint: `linear` or `linear_meanK`.
        #[arg(long)]
        baseline: Option<String>,
        #[arg(long, value_name = "PATH")]
        scenes: Option<PathBuf>,
        /// Samples per scene for best-of-K.
        #[arg(short, long)]
        k: Option<usize>,
    },
    /// Render SVG figures: toy_samples, metric_curves or scene_overlay.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        max_scenes: Option<usize>,
        /// Samples files, training logs or series tables; `label=path` names a curve.
        inputs: Vec<String>,
    },
    /// Train and score several regimes over several seeds on the toy set.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Comma-separated regimes.
        #[arg(long)]
        regimes: Option<String>,
        /// Comma-separated seeds.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        iterations: Option<u64>,
    },
}

fn push<V: ToString>(out: &mut Vec<(String, String)>, key: &str, v: Option<V>) {
    if let Some(v) = v {
        out.push((key.to_string(), v.to_string()));
    }
}

fn resolve(common: Common, extra: Vec<(String, String)>) -> anyhow::Result<RunConfig> {
    let mut over = Vec::new();
    push(&mut over, "seed", common.seed);
    push(&mut over, "out", common.out.map(|p| p.display().to_string()));
    push(&mut over, "data", common.data);
    push(&mut over, "precision", common.precision);
    over.extend(extra);
    over.extend(common.set);
    RunConfig::load(common.config.as_deref(), &over)
}

fn path(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenToy { common } => commands::gen_toy(&resolve(common, Vec::new())?),
        Command::Train { common, regime, iterations, resume } => {
            let mut o = Vec::new();
            push(&mut o, "train.regime", regime);
            push(&mut o, "train.iterations", iterations);
            push(&mut o, "resume", path(resume));
            commands::train(&resolve(common, o)?)
        }
        Command::Predict { common, checkpoint, scenes, n_samples } => {
            let mut o = Vec::new();
            push(&mut o, "checkpoint", path(checkpoint));
            push(&mut o, "scenes", path(scenes));
            push(&mut o, "predict.n_samples", n_samples);
            commands::predict(&resolve(common, o)?)
        }
        Command::Evaluate { common, checkpoint, baseline, scenes, k } => {
            let mut o = Vec::new();
            push(&mut o, "checkpoint", path(checkpoint));
            push(&mut o, "eval.baseline", baseline);
            push(&mut o, "scenes", path(scenes));
            push(&mut o, "eval.k", k);
            commands::evaluate(&resolve(common, o)?)
        }
        Command::Plot { common, kind, max_scenes, inputs } => {
            let mut o = Vec::new();
            push(&mut o, "plot.kind", kind);
            push(&mut o, "plot.max_scenes", max_scenes);
            if !inputs.is_empty() {
                o.push(("plot.inputs".into(), inputs.join(",")));
            }
            commands::plot(&resolve(common, o)?)
        }
        Command::Experiment { common, regimes, seeds, iterations } => {
            let mut o = Vec::new();
            push(&mut o, "experiment.regimes", regimes);
            push(&mut o, "experiment.seeds", seeds);
            push(&mut o, "train.iterations", iterations);
            commands::experiment(&resolve(common, o)?)
        }
    }
}

fn exit_status(err: &anyhow::Error) -> u8 {
    let class = err.chain().find_map(|e| e.downcast_ref::<Error>()).map_or(ErrorClass::Data, Error::class);
    match class {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_status(&e))
        }
    }
}
