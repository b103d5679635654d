use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use adalab::certify::{certification_lines, certify, CERTIFICATION_FILE};
use adalab::config::load_config;
use adalab::error::Error;
use adalab::report::generate_report;
use adalab::runner::{run_experiment, RunOptions};

/// Experiment runner for adaptive gradient methods.
#[derive(Parser)]
#[command(name = "adalab", version, disable_version_flag = true)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Worker threads (default: logical cores; numeric outputs do not depend
    /// on this).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Suppress progress and verdict output.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the configured seed ensemble and write CSVs plus a manifest.
    Run { config: PathBuf },
    /// Certify the configured objective/oracle pair against its declarations.
    Check { config: PathBuf },
    /// Aggregate a finished run directory and print the verdict table.
    Report { dir: PathBuf },
    /// Print the tool version.
    Version,
}

const EXIT_OK: u8 = 0;
const EXIT_VERDICT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io(_) | Error::MissingOutput(_) => EXIT_IO,
        _ => EXIT_VERDICT,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}

fn run(cli: Cli) -> adalab::Result<u8> {
    match cli.cmd {
        Cmd::Version => {
            println!("adalab {}", env!("CARGO_PKG_VERSION"));
            Ok(EXIT_OK)
        }
        Cmd::Run { config } => {
            let exp = load_config(&config)?;
            let opts = RunOptions {
                jobs: cli.jobs,
                write_outputs: true,
                quiet: cli.quiet,
            };
            let out = run_experiment(&exp, &opts)?;
            if !cli.quiet {
                println!(
                    "wrote {} seed files and {} to {}",
                    out.manifest.per_seed.len(),
                    adalab::manifest::MANIFEST_FILE,
                    exp.output_dir.display()
                );
            }
            Ok(EXIT_OK)
        }
        Cmd::Check { config } => {
            let exp = load_config(&config)?;
            let report = certify(&exp)?;
            std::fs::create_dir_all(&exp.output_dir)?;
            let mut json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Domain(format!("certification serialization: {e}")))?;
            json.push('\n');
            std::fs::write(exp.output_dir.join(CERTIFICATION_FILE), json)?;
            if !cli.quiet {
                for line in certification_lines(&report) {
                    println!("{line}");
                }
            }
            Ok(if report.pass { EXIT_OK } else { EXIT_VERDICT })
        }
        Cmd::Report { dir } => {
            let out = generate_report(&dir, cli.quiet)?;
            Ok(if out.all_pass { EXIT_OK } else { EXIT_VERDICT })
        }
    }
}
