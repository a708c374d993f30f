use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = judgecorr_cli::Cli::parse();
    match judgecorr_cli::run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
