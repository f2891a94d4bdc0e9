use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = gla_cli::Cli::parse();
    match gla_cli::run(cli) {
        Ok((config, outcome)) => {
            println!("wrote {} rows to {}", outcome.table.rows.len(), config.output.display());
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(gla_cli::exit_code(&err))
        }
    }
}
