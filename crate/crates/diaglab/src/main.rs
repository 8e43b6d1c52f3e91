use std::process::ExitCode;

fn main() -> ExitCode {
    diaglab::cli::main_with(std::env::args_os())
}
