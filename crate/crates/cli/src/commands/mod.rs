//! One module per subcommand. Each exposes `args()` for the parser and
//! `exec()` to run it.

use std::io::Write;
use std::path::PathBuf;

use clap::ArgMatches;

use crate::error::{CliError, CliResult};

pub mod eval;
pub mod gen_data;
pub mod grad_check;
pub mod train;
pub mod translate;

/// Output streams of a command: results go to `out`, progress and the
/// manifest to `err`.
pub struct Streams<'a> {
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

impl Streams<'_> {
    pub fn say(&mut self, line: &str) -> CliResult<()> {
        writeln!(self.out, "{line}").map_err(|e| CliError::Usage(format!("cannot write output: {e}")))
    }

    pub fn note(&mut self, line: &str) -> CliResult<()> {
        writeln!(self.err, "{line}").map_err(|e| CliError::Usage(format!("cannot write diagnostics: {e}")))
    }
}

fn path(m: &ArgMatches, id: &str) -> Option<PathBuf> {
    m.get_one::<PathBuf>(id).cloned()
}

fn required_path(m: &ArgMatches, id: &str) -> PathBuf {
    path(m, id).expect("clap enforces required arguments")
}

fn value<T: Clone + Send + Sync + 'static>(m: &ArgMatches, id: &str) -> T {
    m.get_one::<T>(id).cloned().expect("argument has a default")
}
