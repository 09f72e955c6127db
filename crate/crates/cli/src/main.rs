//! `flockctl`: run flocking scenarios from JSON configuration files.
//!
//! Exit codes: 0 every check passed, 1 a check failed, 2 the configuration
//! is invalid, 3 the run hit a numerical or I/O failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flock_core::harness::{self, Scenario, Status};
use flock_core::{FlockError, Result};

#[derive(Parser)]
#[command(name = "flockctl", version, about = "Cucker-Smale flocking scenarios and envelope checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its outputs without printing the check table.
    Simulate(Common),
    /// Run a scenario and print one line per check.
    Verify(Common),
    /// Print the envelope constants for the scenario's initial data.
    Envelope(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output_dir` from the config.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Generator seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn load(common: &Common) -> Result<Scenario> {
    let mut scenario = harness::load_scenario(&common.config)?;
    if let Some(seed) = common.seed {
        scenario = scenario.with_seed(seed);
    }
    if let Some(out) = &common.output {
        scenario.output_dir = out.clone();
    }
    Ok(scenario)
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(FlockError::config("--threads", "need at least one thread"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| FlockError::config("--threads", e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> i32 {
    let (common, verbose) = match &cli.command {
        Command::Simulate(c) => (c, false),
        Command::Verify(c) => (c, true),
        Command::Envelope(c) => (c, false),
    };
    let scenario = init_threads(common.threads).and_then(|_| load(common));
    let scenario = match scenario {
        Ok(s) => s,
        Err(e) => {
            eprintln!("flockctl: {e}");
            return harness::exit_code(&Err(e));
        }
    };

    if let Command::Envelope(_) = cli.command {
        return match harness::envelope_report(&scenario) {
            Ok(v) => {
                println!("{}", flock_core::io::to_sorted_json(&v));
                0
            }
            Err(e) => {
                eprintln!("flockctl: {e}");
                harness::exit_code(&Err(e))
            }
        };
    }

    let result = harness::run_scenario(&scenario);
    match &result {
        Ok(report) => {
            if verbose {
                for c in &report.checks {
                    let status = match &c.status {
                        Status::Pass => "PASS".to_string(),
                        Status::Fail => "FAIL".to_string(),
                        Status::Skipped(why) => why.clone(),
                    };
                    println!("{:<32} {:<10} measured {:e} bound {:e}  {}", c.name, status, c.measured, c.bound, c.detail);
                }
            }
            let failed = report.checks.iter().filter(|c| !c.passed()).count();
            println!(
                "{} checks, {} failed; outputs in {}",
                report.checks.len(),
                failed,
                scenario.output_dir.display()
            );
        }
        Err(e) => eprintln!("flockctl: {e}"),
    }
    harness::exit_code(&result)
}

fn main() -> ExitCode {
    let code = run(Cli::parse());
    ExitCode::from(code as u8)
}
