use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(mec_ibnb_cli::run(std::env::args_os()) as u8)
}
