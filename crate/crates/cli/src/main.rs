use std::io::{stderr, stdout};
use std::process::ExitCode;

fn main() -> ExitCode {
    let mut err = stderr().lock();
    match kvmem_cli::run(std::env::args_os(), &mut stdout().lock(), &mut err) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            use std::io::Write;
            let _ = writeln!(err, "error: {e}");
            e.into()
        }
    }
}
