use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use dib_cli::experiment::ExperimentError;
use dib_cli::{load_model, render_table, run_experiment, summarize, write_csv, ExperimentConfig, RunOptions};
use dib_core::data::load_idx;

const OUT_DIR_VAR: &str = "DIB_OUT_DIR";

#[derive(Parser)]
#[command(name = "dib", version, about = "Boosted ensembles of convolutional networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every repetition of an experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `out`, then $DIB_OUT_DIR.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        deterministic: bool,
        /// Retrain runs even if a finished record with the same config exists.
        #[arg(long)]
        fresh: bool,
    },
    /// Per-method comparison table of a directory of runs.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Also write every round of every run as CSV.
        #[arg(long)]
        rounds_csv: Option<PathBuf>,
    },
    /// Check a config and dry-run its growth policy.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Classify an IDX file with a saved ensemble.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
}

enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

fn invalid<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Invalid(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { config, out, workers, deterministic, fresh } => {
            let cfg = ExperimentConfig::load(&config).map_err(invalid)?;
            let out = out
                .or(cfg.out.clone())
                .or_else(|| std::env::var_os(OUT_DIR_VAR).map(PathBuf::from))
                .ok_or_else(|| invalid(anyhow!("no output directory: pass --out or set DIB_OUT_DIR")))?;
            let opts = RunOptions { workers, deterministic, resume: !fresh, ..RunOptions::new(&out) };
            let records = run_experiment(&cfg, &opts).map_err(|e| match e {
                ExperimentError::Config(_) => invalid(e),
                _ => runtime(e),
            })?;
            for r in records.iter().filter_map(|r| r.result.as_ref()) {
                println!("run {:>3}: test error {:.4}", r.run, r.test_error);
            }
            println!("records written to {}", out.display());
            Ok(())
        }
        Command::Summarize { input, csv, rounds_csv } => {
            let rows = summarize(&input).map_err(|e| invalid(anyhow!(e)))?;
            print!("{}", render_table(&rows));
            if let Some(path) = csv {
                let f = File::create(&path).with_context(|| path.display().to_string()).map_err(runtime)?;
                write_csv(&rows, f).map_err(runtime)?;
            }
            if let Some(path) = rounds_csv {
                let records = dib_cli::read_records(&input).map_err(|e| runtime(anyhow!(e)))?;
                dib_cli::metrics::write_rounds_csv(&records, &path).map_err(runtime)?;
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config).map_err(invalid)?;
            cfg.validate().map_err(invalid)?;
            if let Some(dib) = cfg.dib_config(cfg.seed) {
                let layers = cfg.network.layers.len() + dib.growth.insertions_by(dib.rounds.saturating_sub(1));
                println!(
                    "growth policy ok: {} rounds, final member has {layers} layers, {} epochs in total",
                    dib.rounds,
                    dib.total_epochs()
                );
            }
            println!("{} ok", config.display());
            Ok(())
        }
        Command::Predict { model, images, labels } => {
            let data = load_idx(&images, &labels).map_err(invalid)?;
            let saved = load_model(&model, Some(data.classes())).map_err(invalid)?;
            let ensemble = &saved.ensemble;
            if ensemble.input_shape() != data.example_shape() {
                return Err(invalid(anyhow!(
                    "model expects inputs of shape {:?}, the file holds {:?}",
                    ensemble.input_shape(),
                    data.example_shape()
                )));
            }
            let error = ensemble.error_rate(&data).map_err(runtime)?;
            println!("{} examples, {} members, misclassification rate {:.4}", data.len(), ensemble.len(), error);
            Ok(())
        }
    }
}
