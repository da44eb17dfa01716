mod args;
mod commands;
mod files;

use std::process::ExitCode;

use clap::Parser;
use gmxc_core::CodecError;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_CORRUPT: u8 = 3;
pub const EXIT_SELFTEST: u8 = 4;

fn exit_code(e: &CodecError) -> u8 {
    match e {
        CodecError::Io(_) | CodecError::Format(_) | CodecError::BadWeights(_) => EXIT_IO,
        CodecError::Corrupt(_) | CodecError::StreamExhausted => EXIT_CORRUPT,
        _ => EXIT_USAGE,
    }
}

fn configure_threads() {
    let Ok(v) = std::env::var("GMXC_THREADS") else { return };
    match v.parse::<usize>() {
        Ok(n) if n > 0 => {
            // Fails only if a pool already exists, which cannot happen this early.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("gmxc: ignoring GMXC_THREADS={v:?} (expected a positive integer)"),
    }
}

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads();
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("gmxc: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
