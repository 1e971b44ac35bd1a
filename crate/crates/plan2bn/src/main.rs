use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(plan2bn::cli::run(std::env::args_os()) as u8)
}
