use std::process::ExitCode;

fn main() -> ExitCode {
    stabsphere::cli::main_with(std::env::args_os())
}
