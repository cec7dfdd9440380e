use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use scanpath_core::config::ExperimentConfig;
use scanpath_core::dataset::SplitKind;
use scanpath_core::pipeline::{
    self, predictions_path, PredictionInput, Predictor, RunOptions, SynthSource,
};

/// Eye-tracking scanpath harness: gaze to fixations to word scanpaths,
/// leave-one-out prompt datasets, baseline predictors and scoring.
#[derive(Debug, Parser)]
#[command(name = "scanpath", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, default_value = "experiment.toml")]
    config: PathBuf,
    /// Worker threads for per-trial and per-split work.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic gaze files (and, with --study, the method corpus).
    Synth {
        /// Generate a study-shaped corpus: 27 participants, 25 of 68 methods each.
        #[arg(long, conflicts_with = "scripts")]
        study: bool,
        /// Scripted trials JSONL over the configured corpus.
        #[arg(long)]
        scripts: Option<PathBuf>,
    },
    /// Detect fixations in every configured gaze file.
    Fixations,
    /// Map fixations to tokens and write word scanpaths.
    Scanpaths,
    /// Write leave-one-out manifests and prompt files.
    Splits,
    /// Run a baseline predictor over every split.
    Predict {
        /// reading-order, name-first or markov.
        #[arg(long, default_value = "markov")]
        predictor: String,
        /// Sample the Markov baseline instead of decoding greedily.
        #[arg(long)]
        sample: bool,
    },
    /// Score predictions and write the report, long report and histograms.
    Score {
        /// KIND=PATH predictions JSONL for a split kind. Repeatable.
        #[arg(long = "predictions", value_name = "KIND=PATH")]
        predictions: Vec<String>,
        /// KIND=DIR of raw completion files named after the split directories.
        #[arg(long = "completions", value_name = "KIND=DIR")]
        completions: Vec<String>,
        /// Score the output of `predict` for this baseline on every configured split kind.
        #[arg(long)]
        predictor: Option<String>,
    },
}

fn kind_and_path(arg: &str) -> anyhow::Result<(SplitKind, PathBuf)> {
    let (kind, path) = arg
        .split_once('=')
        .ok_or_else(|| anyhow!("expected KIND=PATH, got `{arg}`"))?;
    Ok((kind.parse()?, PathBuf::from(path)))
}

fn run(cli: Cli) -> anyhow::Result<Vec<String>> {
    let cfg = ExperimentConfig::load(&cli.config)
        .with_context(|| format!("loading {}", cli.config.display()))?;
    let opts = RunOptions {
        jobs: cli.jobs,
        seed: cli.seed,
    };
    let outcome = match cli.command {
        Command::Synth { study, scripts } => {
            let source = match (study, scripts) {
                (true, _) => SynthSource::Study,
                (false, Some(path)) => SynthSource::Scripts(path),
                (false, None) => return Err(anyhow!("synth needs --study or --scripts PATH")),
            };
            pipeline::cmd_synth(&cfg, &opts, &source)?
        }
        Command::Fixations => pipeline::cmd_fixations(&cfg, &opts)?,
        Command::Scanpaths => pipeline::cmd_scanpaths(&cfg, &opts)?,
        Command::Splits => pipeline::cmd_splits(&cfg, &opts)?,
        Command::Predict { predictor, sample } => {
            pipeline::cmd_predict(&cfg, &opts, predictor.parse::<Predictor>()?, sample)?
        }
        Command::Score {
            predictions,
            completions,
            predictor,
        } => {
            let mut inputs = Vec::new();
            for arg in &predictions {
                let (kind, path) = kind_and_path(arg)?;
                inputs.push((kind, PredictionInput::Jsonl(path)));
            }
            for arg in &completions {
                let (kind, path) = kind_and_path(arg)?;
                inputs.push((kind, PredictionInput::Completions(path)));
            }
            if let Some(name) = predictor {
                let p: Predictor = name.parse()?;
                for &kind in &cfg.evaluation.split_kinds {
                    inputs.push((
                        kind,
                        PredictionInput::Jsonl(predictions_path(&cfg, p, kind)),
                    ));
                }
            }
            pipeline::cmd_score(&cfg, &opts, &inputs)?
        }
    };
    for path in &outcome.written {
        println!("wrote {}", path.display());
    }
    Ok(pipeline::summarize_warnings(&outcome.warnings))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            for line in summary {
                eprintln!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
