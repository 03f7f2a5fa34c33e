//! Synthetic corpora with gold alignments.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use kvmem_core::data::{gen_copy_task, gen_lexical_task, ParallelCorpus};

use super::{required_path, value, Streams};
use crate::error::{CliError, CliResult};
use crate::io::{write_alignments, write_corpus};

pub fn args() -> Command {
    Command::new("gen-data")
        .about("Generate a synthetic parallel corpus split into train, valid and test files")
        .arg(
            Arg::new("task")
                .long("task")
                .required(true)
                .value_parser(["copy", "lexical"]),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .required(true)
                .value_parser(value_parser!(PathBuf))
                .help("output directory, created if missing"),
        )
        .arg(num("vocab-size", "20", "number of distinct words"))
        .arg(num("min-len", "1", "shortest sentence"))
        .arg(num("max-len", "10", "longest sentence"))
        .arg(num("count", "1000", "training pairs"))
        .arg(num("valid", "0", "extra pairs for the validation split"))
        .arg(num("test", "0", "extra pairs for the test split"))
        .arg(
            Arg::new("seed")
                .long("seed")
                .default_value("1")
                .value_parser(value_parser!(u64)),
        )
        .arg(
            Arg::new("invert")
                .long("invert")
                .action(ArgAction::SetTrue)
                .help("reverse the word order of lexical targets"),
        )
}

fn num(name: &'static str, default: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .default_value(default)
        .value_parser(value_parser!(usize))
        .help(help)
}

pub fn exec(m: &ArgMatches, io: &mut Streams<'_>) -> CliResult<()> {
    let task: String = value(m, "task");
    let out = required_path(m, "out");
    let vocab_size: usize = value(m, "vocab-size");
    let min_len: usize = value(m, "min-len");
    let max_len: usize = value(m, "max-len");
    let count: usize = value(m, "count");
    let valid: usize = value(m, "valid");
    let test: usize = value(m, "test");
    let seed: u64 = value(m, "seed");
    let invert = m.get_flag("invert");
    if invert && task != "lexical" {
        return Err(CliError::Usage("--invert applies to the lexical task only".into()));
    }
    let total = count + valid + test;
    // One draw for all splits: the lexical bijection must be shared.
    let corpus = match task.as_str() {
        "copy" => gen_copy_task(vocab_size, min_len, max_len, total, seed)?,
        _ => gen_lexical_task(vocab_size, min_len, max_len, total, seed, invert)?.corpus,
    };
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    let (rest, test_split) = corpus.split_tail(test);
    let (train_split, valid_split) = rest.split_tail(valid);
    let mut files = Vec::new();
    for (name, split) in [("train", train_split), ("valid", valid_split), ("test", test_split)] {
        if split.is_empty() {
            continue;
        }
        files.extend(write_split(&out, name, &split)?);
    }
    let manifest = serde_json::json!({
        "task": task,
        "vocab_size": vocab_size,
        "min_len": min_len,
        "max_len": max_len,
        "count": count,
        "valid": valid,
        "test": test,
        "seed": seed,
        "invert": invert,
        "files": files,
    });
    let path = out.join("manifest.json");
    fs::write(&path, format!("{manifest:#}\n")).map_err(|e| CliError::io(&path, e))?;
    io.note(&format!("wrote {} pairs to {}", total, out.display()))
}

fn write_split(dir: &Path, name: &str, split: &ParallelCorpus) -> CliResult<Vec<String>> {
    let src = dir.join(format!("{name}.src"));
    let trg = dir.join(format!("{name}.trg"));
    let align = dir.join(format!("{name}.align"));
    write_corpus(&src, &split.sources())?;
    write_corpus(&trg, &split.targets())?;
    let links: Vec<_> = split.pairs.iter().map(|p| p.links.clone().unwrap_or_default()).collect();
    write_alignments(&align, &links)?;
    Ok([src, trg, align]
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect())
}
