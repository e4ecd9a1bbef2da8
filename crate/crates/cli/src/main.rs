use std::io::Write;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use tcspc_cli::{io, run, Cli, CliError};

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let result = io::expand_config(argv).and_then(|argv| match Cli::try_parse_from(argv) {
        Ok(cli) => run(cli.command),
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            std::process::exit(0);
        }
        Err(e) => Err(CliError::Usage(e.render().to_string())),
    });
    match result {
        Ok(outcome) => {
            // A closed stdout (e.g. `| head`) must not turn success into a panic.
            let mut out = std::io::stdout().lock();
            for line in &outcome.summary {
                let _ = writeln!(out, "{line}");
            }
            for f in &outcome.files {
                let _ = writeln!(out, "wrote {}", outcome.out_dir.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
