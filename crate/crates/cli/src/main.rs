use std::io;
use std::process::ExitCode;

fn main() -> ExitCode {
    if let Err(e) = mixmarket_cli::init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(mixmarket_cli::EXIT_CONFIG as u8);
    }
    let code = mixmarket_cli::run_command(
        std::env::args_os(),
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    ExitCode::from(code as u8)
}
