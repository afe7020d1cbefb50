use std::process::ExitCode;

fn main() -> ExitCode {
    ensgate_cli::run(std::env::args_os())
}
