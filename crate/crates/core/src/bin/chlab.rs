use std::path::PathBuf;
use std::process::ExitCode;

use chlab::harness::{self, HarnessError};
use clap::{Parser, Subcommand};

/// Camassa–Holm soliton laboratory.
#[derive(Parser)]
#[command(name = "chlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Print the full report as JSON instead of the summary.
        #[arg(long)]
        json: bool,
    },
    /// List registered experiments.
    List,
    /// Flatten a run directory's report into CSV files.
    Export { run_dir: PathBuf },
}

fn fail(e: HarnessError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            let width = harness::REGISTRY
                .iter()
                .map(|e| e.name.len())
                .max()
                .unwrap_or(0);
            for e in harness::REGISTRY {
                println!("{:width$}  {:12}  {}", e.name, e.module, e.description);
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, json } => match harness::run_path(&config) {
            Ok(report) => {
                if json {
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&report).expect("report serializes")
                    );
                } else {
                    for a in &report.assertions {
                        let op = match a.check {
                            harness::Check::Below => "<",
                            harness::Check::Above => ">",
                        };
                        println!(
                            "{} {:44} {:.6e} {op} {:.3e}",
                            if a.passed { "PASS" } else { "FAIL" },
                            a.id,
                            a.measured,
                            a.tolerance
                        );
                    }
                    println!(
                        "wrote {} files to {} in {:.2} s",
                        report.files.len(),
                        report.run_dir.display(),
                        report.wall_time_s
                    );
                }
                ExitCode::from(report.exit_code() as u8)
            }
            Err(e) => fail(e),
        },
        Command::Export { run_dir } => match harness::export(&run_dir) {
            Ok(paths) => {
                for p in paths {
                    println!("{}", p.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
