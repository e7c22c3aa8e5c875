//! Command line front end: generate synthetic federations, run single
//! experiments, execute batch sweeps, and verify the acceptance criteria.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedprobe_core::acceptance;
use fedprobe_core::experiment::{
    execute, load_config, load_sweep, ExperimentConfig, ExperimentKind,
};
use fedprobe_core::synth::{generate_federation, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "fedprobe",
    version,
    about = "Personalized federated learning by data-driven peer selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic federation and write it to a directory of CSVs.
    Generate {
        /// TOML file describing the federation; defaults to the standard
        /// two-cluster testbed.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: federation).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Run one experiment kind and write its CSV traces and manifest.
    Run {
        /// One of: dm_sweep, noise_sweep, subset_sweep, ifca_compare,
        /// ifca_misspecified, oracle_compare, online, tree_agnostic.
        kind: String,
        /// TOML file with parameter overrides for this experiment.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Base seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: config value, then $FEDPROBE_OUT,
        /// then results).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
    /// Run every experiment listed in a batch config file.
    Sweep {
        /// TOML file with one [[experiment]] table per experiment.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Run the acceptance suite and print one pass/fail line per criterion.
    Verify {
        #[arg(long)]
        quiet: bool,
    },
}

fn read_file(path: &Path) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {}", path.display(), e))
}

fn cmd_generate(
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    quiet: bool,
) -> Result<(), String> {
    let spec = match config {
        Some(path) => {
            SyntheticSpec::from_toml(&read_file(&path)?, seed).map_err(|e| e.to_string())?
        }
        None => SyntheticSpec::default_testbed(seed.unwrap_or(0)),
    };
    let dir = out.unwrap_or_else(|| PathBuf::from("federation"));
    let federation = generate_federation(&spec).map_err(|e| e.to_string())?;
    federation.save_to_dir(&dir).map_err(|e| e.to_string())?;
    if !quiet {
        println!(
            "wrote {} device files and manifest.txt to {}",
            federation.n_devices(),
            dir.display()
        );
    }
    Ok(())
}

fn cmd_run(
    kind: String,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    quiet: bool,
) -> Result<(), String> {
    let kind = ExperimentKind::parse(&kind).map_err(|e| e.to_string())?;
    let mut experiment = match config {
        Some(path) => load_config(&read_file(&path)?).map_err(|e| e.to_string())?,
        None => ExperimentConfig::new(kind),
    };
    experiment.kind = kind;
    run_one(&experiment, seed, out.as_deref(), quiet)
}

fn run_one(
    experiment: &ExperimentConfig,
    seed: Option<u64>,
    out: Option<&Path>,
    quiet: bool,
) -> Result<(), String> {
    let (output, paths) = execute(experiment, seed, out).map_err(|e| e.to_string())?;
    if !quiet {
        println!(
            "{}: {} columns x {} seeds",
            output.resolved.kind.name(),
            output.traces.len(),
            output.resolved.n_seeds
        );
        for path in paths {
            println!("  wrote {}", path.display());
        }
    }
    Ok(())
}

fn cmd_sweep(config: PathBuf, quiet: bool) -> Result<(), String> {
    let experiments = load_sweep(&read_file(&config)?).map_err(|e| e.to_string())?;
    let base = std::env::var_os(fedprobe_core::experiment::ENV_OUT_DIR)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"));
    for experiment in &experiments {
        // Give each experiment its own subdirectory unless it set one.
        let sub = experiment
            .out
            .clone()
            .unwrap_or_else(|| base.join(experiment.kind.name()));
        run_one(experiment, None, Some(&sub), quiet)?;
    }
    Ok(())
}

fn cmd_verify(quiet: bool) -> ExitCode {
    let reports = acceptance::run_all(quiet);
    let passed = reports.iter().filter(|r| r.passed).count();
    if !quiet {
        println!("{}/{} criteria passed", passed, reports.len());
    }
    if passed == reports.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate {
            config,
            seed,
            out,
            quiet,
        } => cmd_generate(config, seed, out, quiet),
        Command::Run {
            kind,
            config,
            seed,
            out,
            quiet,
        } => cmd_run(kind, config, seed, out, quiet),
        Command::Sweep { config, quiet } => cmd_sweep(config, quiet),
        Command::Verify { quiet } => return cmd_verify(quiet),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {}", message);
            ExitCode::from(2)
        }
    }
}
