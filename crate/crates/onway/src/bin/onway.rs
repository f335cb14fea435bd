use std::process::ExitCode;

fn main() -> ExitCode {
    onway::cli::run()
}
