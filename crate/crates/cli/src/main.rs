use std::process::ExitCode;

use clap::Parser;
use ia_cli::{execute, Cli, CliError, Options};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = Options::from_cli(&cli).and_then(|opts| execute(cli.command, &opts));
    match result {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let CliError::Infeasible { report, .. } = &e {
                print!("{report}");
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
