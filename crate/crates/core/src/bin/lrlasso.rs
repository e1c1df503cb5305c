use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(lrlasso::cli::run())
}
