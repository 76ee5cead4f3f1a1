use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use p2pl::harness::{self, verify, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "p2pl",
    about = "Peer-to-peer deep learning simulator with federated and centralized baselines",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file, a preset, or the defaults.
    Run {
        /// Flat key = value configuration file.
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Named preset (see `p2pl presets`).
        #[arg(long)]
        preset: Option<String>,
        /// Override single keys, e.g. --set devices=30 --set seed=7.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Tabulate rounds-to-threshold across metric files.
    Summarize {
        /// Metric CSV files produced by `run`.
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Accuracy threshold the minimum device accuracy must reach.
        #[arg(long, default_value_t = 0.97)]
        threshold: f64,
        /// Also merge all series into one long-format CSV for plotting.
        #[arg(long)]
        series_out: Option<PathBuf>,
    },
    /// Run the mixing-stochasticity and graph-statistics validators.
    Verify {
        /// Device count for the topology suite.
        #[arg(long, default_value_t = 100)]
        devices: usize,
        /// Connected graph samples per random family.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Skip the (slow) generated-graph statistics section.
        #[arg(long)]
        skip_stats: bool,
    },
    /// List the documented experiment presets.
    Presets,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> p2pl::Result<ExitCode> {
    match cli.command {
        Command::Run { config, preset, set } => {
            let mut cfg = match (config, preset) {
                (Some(path), None) => ExperimentConfig::from_file(&path)?,
                (None, Some(name)) => harness::preset(&name)?,
                (None, None) => ExperimentConfig::default(),
                (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
            };
            cfg.apply_overrides(&set)?;
            let (path, report) = harness::run_experiment(&cfg)?;
            println!("metrics written to {}", path.display());
            print!("{report}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Summarize {
            files,
            threshold,
            series_out,
        } => {
            let summary = harness::summarize(&files, threshold)?;
            print!("{summary}");
            if let Some(out) = series_out {
                harness::write_series(&files, &out)?;
                println!("series written to {}", out.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            devices,
            seeds,
            skip_stats,
        } => {
            let mut all_passed = true;
            println!("mixing stochasticity (K = {devices}):");
            for line in verify::stochasticity_checks(devices)? {
                println!("  {line}");
                all_passed &= line.passed;
            }
            if !skip_stats {
                println!("generated-graph statistics (K = 100, {seeds} samples per family):");
                for line in verify::graph_stat_checks(100, seeds)? {
                    println!("  {line}");
                    all_passed &= line.passed;
                }
            }
            Ok(if all_passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Presets => {
            for name in harness::preset_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
