//! Command-line entry point for the MiniDafny verifier.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "MiniDafny", version = "0.1.0", about = "Verifier for a small Dafny subset")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse, resolve, and verify a Dafny file.
    Verify {
        /// The .dfy file to verify.
        file: PathBuf,
        /// Time budget for verifying the whole file, in seconds.
        #[arg(long, default_value_t = 30)]
        verification_time_limit: u64,
        /// Accepted for compatibility; verification runs single-threaded.
        #[arg(long, default_value_t = 1)]
        cores: u32,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { minidafny::report::EXIT_USAGE as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Cmd::Verify { file, verification_time_limit, cores: _ } => {
            let source = match std::fs::read_to_string(&file) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("minidafny: cannot read {}: {e}", file.display());
                    return ExitCode::from(minidafny::report::EXIT_USAGE as u8);
                }
            };
            let label = file.display().to_string();
            let result = minidafny::verify_source(
                &label,
                &source,
                Duration::from_secs(verification_time_limit),
            );
            print!("{}", result.stdout);
            ExitCode::from(result.exit_code as u8)
        }
    }
}
