use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(kmerstream_cli::run(std::env::args_os()))
}
