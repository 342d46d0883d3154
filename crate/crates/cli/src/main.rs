use std::process::ExitCode;

use clap::Parser;

use ctxboot_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ctxboot: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
