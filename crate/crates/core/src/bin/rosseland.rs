use clap::Parser;
use std::process::ExitCode;

fn main() -> ExitCode {
    rosseland::cli::main_with(rosseland::cli::Cli::parse())
}
