use clap::Parser;

use modaprep_cli::args::Cli;
use modaprep_cli::commands::{run, Outcome};
use modaprep_core::Error;

// Exit codes: 0 success, 1 partial/runtime failure, 2 config or usage
// error (clap uses 2 for bad command lines on its own).
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Manifest(_) | Error::Parse { .. } | Error::Mode(_) => 2,
        _ => 1,
    }
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Success) => {}
        Ok(Outcome::PartialFailure) => std::process::exit(1),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(exit_code(&err));
        }
    }
}
