use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use flatlab_cli::cli::{run, Cli};
use flatlab_cli::commands::Context;
use flatlab_cli::config::OUTPUT_ROOT_ENV;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Context {
        output_root: std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from),
    };
    match run(cli, &ctx) {
        Ok(stdout) => {
            print!("{stdout}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
