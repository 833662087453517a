use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use upal_cli::{bench, diag, exit, exit_code, plot, run, ExperimentConfig};

#[derive(Parser)]
#[command(name = "upal", version, about = "Pool-based active learning experiments")]
struct Cli {
    /// Print the effective config (defaults filled in) as TOML and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Learning curves for every (algo, seed).
    Run { config: Option<PathBuf> },
    /// Wall-time sweep over train sizes or budgets.
    Bench { config: Option<PathBuf> },
    /// Estimator, decomposition and concentration checks.
    Diag {
        config: Option<PathBuf>,
        /// Swap in the unweighted estimator; the unbiasedness check should fail.
        #[arg(long)]
        negative_control: bool,
    },
    /// Seed-averaged SVG of the curve files in a directory.
    Plot { curves_dir: PathBuf, out: PathBuf },
}

fn load(path: Option<&Path>) -> Result<ExperimentConfig> {
    Ok(match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    let config_path = match &cli.command {
        Some(Command::Run { config } | Command::Bench { config } | Command::Diag { config, .. }) => config.as_deref(),
        _ => None,
    };
    if cli.print_config {
        print!("{}", load(config_path)?.to_toml());
        return Ok(exit::OK);
    }
    let Some(command) = cli.command else {
        eprintln!("error: a subcommand is required (run, bench, diag, plot); see --help");
        return Ok(exit::CONFIG);
    };
    match command {
        Command::Run { config } => {
            let cfg = load(config.as_deref())?;
            let report = run::cmd_run(&cfg)?;
            if report.capped > 0 {
                eprintln!("warning: {} run(s) hit the round cap before spending the budget", report.capped);
            }
            for (algo, err) in &report.final_errors {
                println!("{algo:>5}  mean final test error {:.4}", err);
            }
            println!("wrote {} curves, {}", report.curves.len(), report.summary.display());
            Ok(exit::OK)
        }
        Command::Bench { config } => {
            let cfg = load(config.as_deref())?;
            let report = bench::cmd_bench(&cfg)?;
            println!("{:>14}  {:>5}  {:>10}  {:>10}", "size_or_budget", "algo", "seconds", "test_error");
            for r in &report.rows {
                println!("{:>14}  {:>5}  {:>10.4}  {:>10.4}", r.size_or_budget, r.algo, r.seconds, r.test_error);
            }
            for (v, s) in &report.speedup {
                println!("speedup at {v}: {s:.2}");
            }
            println!("wrote {}", report.table.display());
            Ok(exit::OK)
        }
        Command::Diag { config, negative_control } => {
            let cfg = load(config.as_deref())?;
            let (out, path) = diag::cmd_diag(&cfg, negative_control)?;
            for r in &out.records {
                let tag = match (r.pass, r.hard) {
                    (true, _) => "ok",
                    (false, true) => "FAIL",
                    (false, false) => "info",
                };
                println!("{tag:>4}  {:<26} {:>12.4e}  vs {:>12.4e}", r.name, r.statistic, r.threshold);
            }
            println!("wrote {}", path.display());
            let failed = out.failures();
            if failed.is_empty() {
                Ok(exit::OK)
            } else {
                eprintln!("failed checks: {}", failed.join(", "));
                Ok(exit::CHECK_FAILED)
            }
        }
        Command::Plot { curves_dir, out } => {
            let n = plot::cmd_plot(&curves_dir, &out)?;
            println!("wrote {} ({n} series)", out.display());
            Ok(exit::OK)
        }
    }
}
