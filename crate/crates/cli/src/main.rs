use std::process::ExitCode;

use clap::Parser;

use sdncmv_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) if outcome.subject_failures == 0 => ExitCode::SUCCESS,
        Ok(outcome) => {
            eprintln!("{} subject(s) failed", outcome.subject_failures);
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
