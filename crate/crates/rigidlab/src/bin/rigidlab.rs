use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use rigidlab::catalog::list_catalog;
use rigidlab::experiment::{parse_config, run_experiment, schema_text, RunError};

#[derive(Parser)]
#[command(
    name = "rigidlab",
    about = "Configuration-driven experiments on symplectic rigidity",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        /// Path to the config (see `rigidlab schema`).
        config: PathBuf,
    },
    /// List the built-in Hamiltonians, generating functions, and families.
    Catalog,
    /// Print the config schema and exit-code contract.
    Schema,
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("RIGIDLAB_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n >= 1 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    eprintln!("rigidlab: failed to cap worker count: {}", e);
                    return ExitCode::from(3);
                }
            }
            _ => {
                eprintln!("rigidlab: RIGIDLAB_THREADS must be a positive integer");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Catalog => {
            print!("{}", list_catalog());
            ExitCode::SUCCESS
        }
        Command::Schema => {
            println!("{}", schema_text());
            ExitCode::SUCCESS
        }
        Command::Run { config } => {
            let start = Instant::now();
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("rigidlab: cannot read {}: {}", config.display(), e);
                    return ExitCode::from(2);
                }
            };
            let (cfg, echo) = match parse_config(&text) {
                Ok(v) => v,
                Err(e) => {
                    eprintln!("rigidlab: {}", e);
                    return ExitCode::from(2);
                }
            };
            match run_experiment(&cfg, echo) {
                Ok(report) => {
                    for a in &report.summary.assertions {
                        println!(
                            "{} {}: value {} bound {}",
                            if a.pass { "PASS" } else { "FAIL" },
                            a.name,
                            a.value,
                            a.bound
                        );
                    }
                    for f in &report.files {
                        println!("wrote {}", f.display());
                    }
                    // wall time goes to stderr so output files and stdout
                    // stay byte-reproducible
                    eprintln!("wall time: {:.3}s", start.elapsed().as_secs_f64());
                    if report.summary.pass {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e @ RunError::Config(_)) => {
                    eprintln!("rigidlab: {}", e);
                    ExitCode::from(2)
                }
                Err(e) => {
                    eprintln!("rigidlab: {}", e);
                    ExitCode::from(3)
                }
            }
        }
    }
}
