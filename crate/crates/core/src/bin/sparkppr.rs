use std::process::ExitCode;

fn main() -> ExitCode {
    sparkppr::cli::main_with_args(std::env::args_os())
}
