//! Batch experiment runner.
//!
//! ```text
//! ranslice run <preset|config.json> [--out DIR] [--seed N] [--workers N] [--full]
//! ranslice compare <preset|config.json> --variants sro,s3ro [--out DIR] [--seed N]
//! ranslice validate-mc <preset|config.json> [--out DIR] [--seed N]
//! ranslice presets
//! ```
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 when every sweep
//! point is infeasible.

use clap::{Parser, Subcommand};
use ranslice::harness::{self, HarnessError, Preset, Variant};
use ranslice::ExperimentConfig;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ranslice", about = "RAN slicing experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or an explicit JSON experiment config.
    Run {
        source: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Use the full-scale sample counts (slow).
        #[arg(long)]
        full: bool,
    },
    /// Matched-seed comparison across algorithm variants.
    Compare {
        source: String,
        #[arg(long, value_delimiter = ',', required = true)]
        variants: Vec<String>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Closed-form vs Monte-Carlo validation run.
    ValidateMc {
        source: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List the available presets.
    Presets,
}

fn load(source: &str, full: bool) -> Result<(Option<Preset>, ExperimentConfig), HarnessError> {
    if let Some(p) = Preset::from_name(source) {
        return Ok((Some(p), p.experiment(full)));
    }
    let path = PathBuf::from(source);
    if path.exists() {
        let cfg = ExperimentConfig::from_path(&path)?;
        return Ok((None, cfg));
    }
    Err(HarnessError::UnknownPreset(source.to_string()))
}

fn set_workers(workers: Option<usize>) {
    if let Some(n) = workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn exit_code_for(err: &HarnessError) -> ExitCode {
    match err {
        HarnessError::Config(_) | HarnessError::UnknownPreset(_) | HarnessError::TooFewVariants => {
            ExitCode::from(2)
        }
        HarnessError::InfeasibleEverywhere => ExitCode::from(3),
        _ => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result: Result<(), HarnessError> = match cli.command {
        Command::Run {
            source,
            out,
            seed,
            workers,
            full,
        } => {
            set_workers(workers);
            load(&source, full).and_then(|(preset, mut cfg)| {
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                let summary = harness::run_experiment(preset, &cfg, &out)?;
                println!("{}", serde_json::to_string_pretty(&summary).unwrap());
                Ok(())
            })
        }
        Command::Compare {
            source,
            variants,
            out,
            seed,
            workers,
        } => {
            set_workers(workers);
            load(&source, false).and_then(|(_, mut cfg)| {
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                let parsed: Result<Vec<Variant>, HarnessError> = variants
                    .iter()
                    .map(|v| {
                        Variant::from_name(v)
                            .ok_or_else(|| HarnessError::UnknownPreset(v.clone()))
                    })
                    .collect();
                let csv = harness::compare_algorithms(&cfg, &parsed?, &out)?;
                print!("{csv}");
                Ok(())
            })
        }
        Command::ValidateMc {
            source,
            out,
            seed,
            workers,
        } => {
            set_workers(workers);
            load(&source, false).and_then(|(_, mut cfg)| {
                if let Some(s) = seed {
                    cfg.seed = s;
                }
                std::fs::create_dir_all(&out).map_err(|source| HarnessError::Io {
                    path: out.clone(),
                    source,
                })?;
                let result = harness::validate_mc(&cfg)?;
                std::fs::write(out.join("validate-mc.csv"), &result.csv).map_err(|source| {
                    HarnessError::Io {
                        path: out.join("validate-mc.csv"),
                        source,
                    }
                })?;
                println!(
                    "{}",
                    serde_json::to_string_pretty(&result.summary).unwrap()
                );
                Ok(())
            })
        }
        Command::Presets => {
            for p in Preset::all() {
                println!("{}", p.name());
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
