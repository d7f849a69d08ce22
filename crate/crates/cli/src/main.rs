use std::process::ExitCode;

use clap::Parser;

use skscreen_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads == Some(0) {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    match skscreen_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.class.exit_code()
        }
    }
}
