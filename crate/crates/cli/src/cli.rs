use std::ffi::OsString;
use std::io::Write;

use clap::error::ErrorKind;
use clap::{ArgMatches, Command};

use crate::commands::{self, Streams};
use crate::error::{CliError, CliResult};

pub fn command() -> Command {
    Command::new("kvmem")
        .about("Recurrent NMT with key-value memory attention")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(commands::gen_data::args())
        .subcommand(commands::train::args())
        .subcommand(commands::translate::args("translate", false))
        .subcommand(commands::translate::args("dump-attention", true))
        .subcommand(commands::eval::args())
        .subcommand(commands::grad_check::args())
}

/// Parses `args` (program name first) and runs the chosen subcommand.
pub fn run<I, A>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()>
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            write!(out, "{}", e.render()).map_err(|e| CliError::Usage(e.to_string()))?;
            return Ok(());
        }
        Err(e) => {
            let text = e.render().to_string();
            let text = text.strip_prefix("error: ").unwrap_or(&text).trim_end();
            return Err(CliError::Usage(text.to_string()));
        }
    };
    let (name, sub) = matches.subcommand().expect("a subcommand is required");
    let mut io = Streams { out, err };
    echo_manifest(&mut io, name, sub)?;
    match name {
        "gen-data" => commands::gen_data::exec(sub, &mut io),
        "train" => commands::train::exec(sub, &mut io),
        "translate" | "dump-attention" => commands::translate::exec(sub, &mut io),
        "eval" => commands::eval::exec(sub, &mut io),
        "grad-check" => commands::grad_check::exec(sub, &mut io),
        other => Err(CliError::Usage(format!("unknown subcommand {other}"))),
    }
}

/// Writes the resolved arguments, defaults included, as one JSON line so a
/// run can be repeated from its log.
fn echo_manifest(io: &mut Streams<'_>, name: &str, m: &ArgMatches) -> CliResult<()> {
    let mut args = serde_json::Map::new();
    let (mut cur_name, mut cur) = (name.to_string(), m);
    loop {
        for id in cur.ids() {
            if let Ok(Some(vals)) = cur.try_get_raw(id.as_str()) {
                let vals: Vec<String> = vals.map(|v| v.to_string_lossy().into_owned()).collect();
                let value = match vals.as_slice() {
                    [one] => serde_json::Value::String(one.clone()),
                    _ => vals.into(),
                };
                args.insert(id.to_string(), value);
            }
        }
        match cur.subcommand() {
            Some((n, s)) => {
                cur_name = format!("{cur_name} {n}");
                cur = s;
            }
            None => break,
        }
    }
    let manifest = serde_json::json!({
        "command": cur_name,
        "version": env!("CARGO_PKG_VERSION"),
        "args": args,
    });
    io.note(&format!("manifest {manifest}"))
}
