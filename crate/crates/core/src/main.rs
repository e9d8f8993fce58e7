use std::process::ExitCode;

use mtcov::cli;

fn main() -> ExitCode {
    let config = match cli::parse_args(std::env::args_os()) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    env_logger::Builder::new().parse_filters(&config.log_level).init();
    match cli::run(&config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
