use std::process::ExitCode;

fn main() -> ExitCode {
    match pdiff_cli::run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(pdiff_cli::CliError::Usage(e)) => {
            let _ = e.print();
            ExitCode::from(e.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("pdiff: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
