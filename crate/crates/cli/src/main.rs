use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddrhc_cli::config::ExperimentConfig;
use ddrhc_cli::report::constellation_report;
use ddrhc_cli::simulate::simulate;
use ddrhc_cli::suites::{run_verify, Fault, VerifyOptions};
use ddrhc_leo::TruthMode;

#[derive(Parser)]
#[command(name = "ddrhc", version, about = "Distributed receding-horizon control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML, or JSON by extension). Defaults to the
    /// Walker 53°:40/5/1 desk-scale scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run this seed only, overriding `seeds`.
    #[arg(long)]
    seed: Option<u64>,
    /// Truth model of the plant, overriding `truth_mode`.
    #[arg(long, value_parser = parse_truth)]
    truth: Option<TruthMode>,
}

fn parse_truth(s: &str) -> Result<TruthMode, String> {
    s.parse().map_err(|e| format!("{e}"))
}

#[derive(Subcommand)]
enum Command {
    /// Run the exactness, cost identity, LQR equivalence, scheduling and
    /// sparsity suites.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Random instances per suite.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Plant a fault to check that the suites catch it.
        #[arg(long, value_enum)]
        inject: Option<Fault>,
    },
    /// Closed-loop simulation; writes metrics, detail, trace and window CSVs.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Coupling counts against range and line-of-sight durations.
    Constellation {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::desk_scale(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(truth) = common.truth {
        cfg.truth_mode = truth;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Verify { common, seeds, inject } => {
            // The suites draw their own instances; a config is only checked.
            load(&common)?;
            let outcomes = run_verify(&VerifyOptions { seeds, fault: inject });
            for o in &outcomes {
                print!("{o}");
            }
            let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect();
            if failed.is_empty() {
                println!("all suites passed");
            } else {
                println!("failed: {}", failed.join(", "));
            }
            Ok(failed.is_empty())
        }
        Command::Simulate { common } => {
            let cfg = load(&common)?;
            for s in simulate(&cfg)? {
                print!("seed {}: {} steps, |z| {:.4e} -> {:.4e}", s.seed, s.steps, s.initial_z, s.final_z);
                if let (Some(a0), Some(a1)) = (s.initial_mae_a, s.final_mae_a) {
                    print!(", MAE(a) {a0:.2} -> {a1:.2} m");
                }
                println!(" ({})", s.dir.display());
            }
            Ok(true)
        }
        Command::Constellation { common } => {
            let cfg = load(&common)?;
            let report = constellation_report(&cfg, cfg.seeds[0], &cfg.output_dir)?;
            println!("{:>10} {:>4} {:>4} {:>7} {:>8}", "range_km", "min", "max", "mean", "within");
            for c in &report.counts {
                println!("{:>10.0} {:>4} {:>4} {:>7.2} {:>8.2}", c.range / 1e3, c.min, c.max, c.mean, c.mean_within);
            }
            for l in &report.lines {
                println!("{l}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
