use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    chirl::cli::run(chirl::cli::Args::parse())
}
