use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gridchain::harness::audit::AuditError;
use gridchain::harness::eval::EvalError;
use gridchain::harness::run::RunError;
use gridchain::harness::{audit_file, oracle_eval, run_to_dir, verify_files};

#[derive(Parser)]
#[command(name = "gridchain", version, about = "Smart-grid ledger simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write ledger, genesis and reports to a directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a ledger against its genesis file.
    Verify {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        genesis: PathBuf,
    },
    /// Recompute every settlement on a ledger from its raw data.
    Audit {
        #[arg(long)]
        ledger: PathBuf,
    },
    /// Evaluate one oracle service on a JSON input file.
    OracleEval {
        #[arg(long, value_parser = ["forecast", "clear", "flex", "coalition", "baseline"])]
        service: String,
        #[arg(long)]
        input: PathBuf,
    },
}

const FAILURE: u8 = 1;
/// Unreadable or malformed inputs.
const USAGE: u8 = 2;

fn json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => match run_to_dir(&config, seed, &out) {
            Ok(output) => {
                let r = &output.report;
                println!(
                    "{} blocks, {} transactions ({} failed), conservation {}, tip {}",
                    r.chain.blocks,
                    r.chain.transactions,
                    r.chain.failed_receipts,
                    if r.conservation.holds { "holds" } else { "BROKEN" },
                    r.chain.tip_hash
                );
                println!("wrote {}", out.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                let usage = matches!(e, RunError::Config(_) | RunError::Traces(_));
                ExitCode::from(if usage { USAGE } else { FAILURE })
            }
        },
        Command::Verify { ledger, genesis } => match verify_files(&ledger, &genesis) {
            Ok(report) => {
                println!("{}", json(&report));
                if report.ok {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(FAILURE)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(USAGE)
            }
        },
        Command::Audit { ledger } => match audit_file(&ledger) {
            Ok(report) => {
                println!("{}", json(&report));
                if report.clean() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(FAILURE)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(if matches!(e, AuditError::Io(_)) { USAGE } else { FAILURE })
            }
        },
        Command::OracleEval { service, input } => {
            let text = match std::fs::read_to_string(&input) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", input.display());
                    return ExitCode::from(USAGE);
                }
            };
            match oracle_eval(&service, &text) {
                Ok(value) => {
                    println!("{}", json(&value));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(if matches!(e, EvalError::Service(_)) { FAILURE } else { USAGE })
                }
            }
        }
    }
}
