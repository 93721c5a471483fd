use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mimo_npe_core::bench::{
    preset, run_sweep_with, scaled, workers_from_env, ExperimentConfig, PRESETS,
};
use mimo_npe_core::validate;

/// Failed-trial share above which `run` exits with an error status.
const MAX_FAILURE_RATE: f64 = 0.10;

#[derive(Parser)]
#[command(name = "mimo-npe", version, about = "Nonlinear channel estimation benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte-Carlo sweep and write the results as CSV.
    Run {
        /// Start from a named figure configuration.
        #[arg(long)]
        preset: Option<String>,
        /// Flat TOML configuration file, applied on top of the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Shrink antenna and trial counts by this factor.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Trial count (applied after scaling).
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override any configuration key, e.g. `--set alpha=0.5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Worker threads; defaults to MIMO_NPE_WORKERS or the core count.
        #[arg(long)]
        workers: Option<usize>,
        /// Output CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run the numerical self-checks.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// List the figure presets.
    Presets,
}

fn resolve(
    preset_name: Option<&str>,
    config: Option<&PathBuf>,
    scale: f64,
    trials: Option<usize>,
    seed: Option<u64>,
    overrides: &[String],
) -> Result<ExperimentConfig> {
    let mut cfg = match (preset_name, config) {
        (Some(name), _) => preset(name)?,
        (None, Some(_)) => ExperimentConfig::default(),
        (None, None) => bail!("pass --preset or --config"),
    };
    if let Some(path) = config {
        cfg.merge_file(path)
            .with_context(|| format!("reading {}", path.display()))?;
    }
    cfg = scaled(&cfg, scale)?;
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    for o in overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cfg: &ExperimentConfig, workers: usize, out: Option<&PathBuf>) -> Result<ExitCode> {
    eprintln!(
        "{}: {} values of {} x {} trials on {workers} workers",
        cfg.name,
        cfg.sweep_values.len(),
        cfg.sweep_var.name(),
        cfg.trials
    );
    let table = run_sweep_with(cfg, workers, |rows| {
        for r in rows {
            eprintln!(
                "  {}={} {:<11} nmse {:.4e} ± {:.1e}  iters {:.1}  {:.1} ms  failed {}",
                r.sweep_var,
                r.sweep_value,
                r.estimator,
                r.nmse_mean,
                r.nmse_stderr,
                r.iters_mean,
                r.wall_ms_mean,
                r.trials_failed
            );
        }
    })?;
    match out {
        Some(path) => table
            .emit_csv(path)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{}", table.to_csv_string()?),
    }
    let rate = table.worst_failure_rate();
    if rate > MAX_FAILURE_RATE {
        eprintln!("error: {:.1}% of trials failed in at least one row", rate * 100.0);
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            preset,
            config,
            scale,
            trials,
            seed,
            overrides,
            workers,
            out,
            dry_run,
        } => {
            let cfg = resolve(preset.as_deref(), config.as_ref(), scale, trials, seed, &overrides)?;
            if dry_run {
                print!("{}", cfg.to_toml_string());
                return Ok(ExitCode::SUCCESS);
            }
            run(&cfg, workers.unwrap_or_else(workers_from_env), out.as_ref())
        }
        Command::Validate { seed } => {
            let mut ok = true;
            for check in validate::run_all(seed)? {
                let status = if check.passed() { "PASS" } else { "FAIL" };
                ok &= check.passed();
                println!("{status} {} (worst {:.3e}, limit {:.1e})", check.name, check.worst, check.threshold);
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Presets => {
            for (name, description) in PRESETS {
                println!("{name:<12} {description}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
