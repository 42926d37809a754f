use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use wuxing_cli::harness::{self, Split, CHECKPOINT_FILE};
use wuxing_cli::{Case, Checkpoint, ExperimentSpec, HarnessError};
use wuxing_core::{ElementVector, NeuronParams};

#[derive(Parser)]
#[command(name = "wuxing", version, about = "Train and inspect wuxing ODE networks")]
struct Cli {
    /// Experiment file (TOML); defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the experiment file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the training case.
    #[arg(long, global = true)]
    case: Option<Case>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write metrics.csv, config.toml and checkpoint.json.
    Train,
    /// Evaluate a checkpoint on the spec's data.
    Eval {
        /// Defaults to checkpoint.json in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Analytic and settled fixed points for given parameters or a checkpoint.
    InspectFixedPoint {
        #[arg(long, conflicts_with_all = ["k1", "k2", "k3"])]
        checkpoint: Option<PathBuf>,
        /// One value or five comma-separated values.
        #[arg(long, default_value = "1.0")]
        k1: String,
        #[arg(long, default_value = "0.5")]
        k2: String,
        #[arg(long, default_value = "0.5")]
        k3: String,
    },
    /// Print the effective experiment file.
    GenConfig,
}

fn parse_set(s: &str) -> Result<ElementVector, HarnessError> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| HarnessError::Config(format!("`{s}`: {e}")))?;
    let vals = match vals.len() {
        1 => vec![vals[0]; 5],
        5 => vals,
        n => return Err(HarnessError::Config(format!("`{s}`: expected 1 or 5 values, got {n}"))),
    };
    ElementVector::from_slice(&vals).map_err(|e| HarnessError::Config(e.to_string()))
}

fn spec_from(cli: &Cli) -> Result<ExperimentSpec, HarnessError> {
    let mut spec = match &cli.config {
        Some(path) => ExperimentSpec::load(path)?,
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    if let Some(out) = &cli.out {
        spec.output.dir = out.clone();
    }
    if let Some(case) = cli.case {
        spec.case = case;
    }
    spec.validate()?;
    Ok(spec)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    let spec = spec_from(&cli)?;
    match &cli.command {
        Command::Train => {
            let out = harness::run_train(&spec)?;
            let last = out.rows.last().expect("epoch 0 row is always written");
            println!(
                "{}: {} epochs, test accuracy {:.4} -> {}",
                spec.name,
                last.epoch,
                last.test_acc,
                out.out_dir.display()
            );
        }
        Command::Eval { checkpoint, split } => {
            let path = checkpoint.clone().unwrap_or_else(|| spec.output.dir.join(CHECKPOINT_FILE));
            let report = harness::run_eval(&Checkpoint::load(&path)?, &spec, *split)?;
            println!("{split}: {}/{} correct, accuracy {:.4}", report.correct, report.samples, report.accuracy);
            println!("confusion (rows = label, columns = prediction)");
            for (label, row) in report.confusion.iter().enumerate() {
                let cells: Vec<String> = row.iter().map(|c| format!("{c:5}")).collect();
                println!("{label:>3} {}", cells.join(""));
            }
        }
        Command::InspectFixedPoint { checkpoint, k1, k2, k3 } => {
            let reports = match checkpoint {
                Some(path) => harness::inspect_checkpoint(&Checkpoint::load(path)?)?,
                None => {
                    let p = NeuronParams {
                        k1: parse_set(k1)?,
                        k2: parse_set(k2)?,
                        k3: parse_set(k3)?,
                    };
                    vec![harness::inspect_params(0, &p, &spec.fixed_point_config())?]
                }
            };
            for r in &reports {
                print!("{r}");
            }
        }
        Command::GenConfig => {
            let text = spec.to_toml();
            match &cli.out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
                    let path = dir.join(harness::CONFIG_ECHO_FILE);
                    fs::write(&path, text).map_err(HarnessError::io(&path))?;
                }
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
