use std::process::ExitCode;

use clap::Parser;
use emstop_cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match emstop_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
