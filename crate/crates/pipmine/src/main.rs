use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pipmine::commands::{self, Overrides};
use pipmine::manifest::RunManifest;
use pipmine::pipmine_core::simgen::Preset;
use pipmine::{CliError, Result};

/// Mine synthetic drug-combination data with a neural Thompson sampling
/// bandit and evaluate the resulting ensemble.
#[derive(Parser)]
#[command(name = "pipmine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Neutral,
    Protective,
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Run this seed only
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for multi-seed work
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Simulator preset, overriding the config's
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            workers: self.workers,
            preset: self.preset.map(|p| match p {
                PresetArg::Neutral => Preset::Neutral,
                PresetArg::Protective => Preset::Protective,
            }),
        }
    }

    fn config(&self) -> Result<&PathBuf> {
        self.config
            .as_ref()
            .ok_or_else(|| CliError::Config("--config is required".into()))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset, its patterns and an RR histogram
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Mine a dataset once per seed
    Mine {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
    },
    /// Evaluate mined runs against the dataset and patterns
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,
        #[arg(long, value_name = "PATH")]
        patterns: PathBuf,
        /// Output directory of `mine`
        #[arg(long, value_name = "DIR")]
        runs: PathBuf,
    },
    /// Run the full multi-seed experiment, or re-plot an earlier one
    Report {
        #[command(flatten)]
        common: Common,
        /// Re-render plots from DIR/aggregate.csv instead of running
        #[arg(long, value_name = "DIR", conflicts_with = "config")]
        from: Option<PathBuf>,
    },
}

fn summary(m: &RunManifest) {
    println!("{}: {} artifacts, seeds {:?}", m.command, m.artifacts.len(), m.seeds);
    for (label, ms) in &m.timings_ms {
        println!("  {label}: {ms} ms");
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common } => {
            summary(&commands::cmd_generate(
                common.config()?,
                &common.out,
                &common.overrides(),
            )?);
        }
        Command::Mine { common, dataset } => {
            summary(&commands::cmd_mine(
                common.config()?,
                &dataset,
                &common.out,
                &common.overrides(),
            )?);
        }
        Command::Evaluate {
            common,
            dataset,
            patterns,
            runs,
        } => {
            let m = commands::cmd_evaluate(
                common.config()?,
                &dataset,
                &patterns,
                &runs,
                &common.out,
                &common.overrides(),
            )?;
            summary(&m);
        }
        Command::Report { common, from } => match from {
            Some(from) => {
                for p in commands::cmd_replot(&from, &common.out)? {
                    println!("{}", p.display());
                }
            }
            None => summary(&commands::cmd_report(
                common.config()?,
                &common.out,
                &common.overrides(),
            )?),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
