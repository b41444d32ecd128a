//! Command-line front end: run, compare, gen-data, validate-config.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochopt::harness::{self, ExperimentConfig, SyntheticSpec};
use stochopt::Error;

#[derive(Parser)]
#[command(name = "stochopt", version, about = "Adaptive stochastic optimizers for finite-sum problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its metrics CSV and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's metrics output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Full-pass metrics every k iterations; 0 means once per epoch.
        #[arg(long)]
        cadence: Option<usize>,
    },
    /// Run several experiments on one problem and print a summary table.
    Compare {
        /// Repeat once per experiment.
        #[arg(long, required = true, num_args = 1)]
        config: Vec<PathBuf>,
        /// Overrides every config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the summary CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        cadence: Option<usize>,
    },
    /// Generate a synthetic dataset from a TOML spec (LIBSVM, or CSV for a .csv output).
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a config and list every problem found.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

fn absolute(p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(p)).unwrap_or_else(|_| p.to_path_buf())
    }
}

fn load(path: &Path, seed: Option<u64>, out: Option<&Path>, cadence: Option<usize>) -> stochopt::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output = absolute(o);
    }
    if let Some(c) = cadence {
        cfg.cadence = c;
    }
    Ok(cfg)
}

fn run(command: Command) -> stochopt::Result<()> {
    match command {
        Command::Run { config, seed, out, cadence } => {
            let cfg = load(&config, seed, out.as_deref(), cadence)?;
            let outcome = harness::run_experiment(&cfg)?;
            println!("metrics: {}", outcome.metrics_path.display());
            println!("manifest: {}", outcome.manifest_path.display());
            if let Some(loss) = outcome.trace.final_loss() {
                println!("final loss: {loss}");
            }
        }
        Command::Compare { config, seed, out, cadence } => {
            let cfgs = config
                .iter()
                .map(|p| load(p, seed, None, cadence))
                .collect::<stochopt::Result<Vec<_>>>()?;
            let rows = harness::compare(&cfgs)?;
            let mut stdout = std::io::stdout().lock();
            harness::write_summary(&rows, &mut stdout)?;
            stdout.flush()?;
            if let Some(o) = out {
                harness::write_summary(&rows, std::fs::File::create(o)?)?;
            }
        }
        Command::GenData { config, seed, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", config.display())]))?;
            let mut spec = SyntheticSpec::from_toml_str(&text)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            let v = spec.violations();
            if !v.is_empty() {
                return Err(Error::Config(v));
            }
            let data = harness::gen_synthetic(&spec)?;
            let is_csv = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            if is_csv {
                harness::write_csv(&data, &out)?;
            } else {
                harness::write_libsvm(&data, &out)?;
            }
            println!("wrote {} samples of dimension {} to {}", data.len(), data.dim(), out.display());
        }
        Command::ValidateConfig { config } => {
            ExperimentConfig::load(&config)?;
            println!("{}: ok", config.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage_error { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Config(msgs)) => {
            eprintln!("configuration error:");
            for m in msgs {
                eprintln!("  {m}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
