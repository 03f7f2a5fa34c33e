//! Decoding of an input file, one output line per input line.

use std::fs;
use std::path::PathBuf;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use kvmem_core::data::vocab::{EOS, UNK};
use kvmem_core::data::{Links, Side};
use kvmem_core::decode::{beam_decode, forced_decode, Hypothesis};
use kvmem_core::eval::attention_to_alignment;

use super::{path, required_path, Streams};
use crate::checkpoint::Checkpoint;
use crate::error::{CliError, CliResult};
use crate::io::{read_text, tokenize, write_alignments, write_lines, AttentionDump, DumpEntry};

/// Output line standing in for an input line that could not be translated.
pub const SKIP_MARKER: &str = "<skipped>";

pub fn args(name: &'static str, dump_required: bool) -> Command {
    let about = if dump_required {
        "Translate and write the attention of every sentence to a JSON file"
    } else {
        "Translate an input file with beam search"
    };
    Command::new(name)
        .about(about)
        .arg(path_arg("checkpoint", true, "trained model"))
        .arg(path_arg("input", true, "source sentences, one per line"))
        .arg(path_arg("output", false, "translations (default: standard output)"))
        .arg(
            Arg::new("beam")
                .long("beam")
                .value_parser(value_parser!(usize))
                .help("beam width (default: the model's beam_size)"),
        )
        .arg(
            Arg::new("max-len")
                .long("max-len")
                .value_parser(value_parser!(usize))
                .help("output length limit (default: the model's max_decode_len)"),
        )
        .arg(path_arg("dump-attention", dump_required, "attention dump to write"))
        .arg(path_arg(
            "reference",
            false,
            "score these targets by forced decoding instead of searching",
        ))
        .arg(path_arg("alignments", false, "write argmax alignments in Pharaoh format"))
        .arg(
            Arg::new("reject-unknown")
                .long("reject-unknown")
                .action(ArgAction::SetTrue)
                .help("skip lines containing out-of-vocabulary source tokens"),
        )
}

fn path_arg(name: &'static str, required: bool, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .required(required)
        .value_parser(value_parser!(PathBuf))
        .help(help)
}

/// Splits raw bytes into lines, keeping undecodable ones as errors.
fn byte_lines(bytes: &[u8]) -> Vec<Result<&str, String>> {
    let body = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    if bytes.is_empty() {
        return Vec::new();
    }
    body.split(|&b| b == b'\n')
        .map(|l| {
            let l = l.strip_suffix(b"\r").unwrap_or(l);
            std::str::from_utf8(l).map_err(|e| format!("invalid UTF-8: {e}"))
        })
        .collect()
}

pub fn exec(m: &ArgMatches, io: &mut Streams<'_>) -> CliResult<()> {
    let ck = Checkpoint::load(&required_path(m, "checkpoint"))?;
    let cfg = ck.model.config().clone();
    let beam = m.get_one::<usize>("beam").copied().unwrap_or(cfg.beam_size);
    let max_len = m.get_one::<usize>("max-len").copied().unwrap_or(cfg.max_decode_len);
    if beam == 0 || max_len == 0 {
        return Err(CliError::Usage("--beam and --max-len must be at least 1".into()));
    }
    let input_path = required_path(m, "input");
    let input = fs::read(&input_path).map_err(|e| CliError::io(&input_path, e))?;
    let lines = byte_lines(&input);
    let references: Option<Vec<String>> = match path(m, "reference") {
        Some(p) => {
            let refs: Vec<String> = read_text(&p)?.lines().map(str::to_string).collect();
            if refs.len() != lines.len() {
                return Err(CliError::Data(format!(
                    "{} has {} lines but the input has {}",
                    p.display(),
                    refs.len(),
                    lines.len()
                )));
            }
            Some(refs)
        }
        None => None,
    };
    let reject_unknown = m.get_flag("reject-unknown");

    let mut outputs = Vec::with_capacity(lines.len());
    let mut alignments: Vec<Links> = Vec::with_capacity(lines.len());
    let mut dump = AttentionDump::default();
    let mut skipped = 0;
    for (i, line) in lines.into_iter().enumerate() {
        let result = line.and_then(|text| {
            let tokens = tokenize(text);
            let ids = ck.src_vocab.encode(&tokens, Side::Source);
            if reject_unknown {
                if let Some(j) = ids.iter().position(|&id| id == UNK) {
                    return Err(format!("unknown source token `{}`", tokens[j]));
                }
            }
            let hyp: Hypothesis = match &references {
                Some(refs) => {
                    let trg = ck.trg_vocab.encode(&tokenize(&refs[i]), Side::Target);
                    forced_decode(&ck.model, &ids, &trg)
                }
                None => beam_decode(&ck.model, &ids, beam, max_len, cfg.length_norm).and_then(|mut hs| {
                    hs.drain(..1).next().ok_or(kvmem_core::Error::EmptyInput("beam result"))
                }),
            }
            .map_err(|e| e.to_string())?;
            Ok(hyp)
        });
        match result {
            Ok(hyp) => {
                let words: Vec<u32> = hyp.tokens.iter().copied().filter(|&t| t != EOS).collect();
                outputs.push(ck.trg_vocab.decode(&words).join(" "));
                alignments.push(attention_to_alignment(&hyp.trace));
                dump.sentences
                    .push(DumpEntry::from_trace(i, &hyp.trace, &ck.src_vocab, &ck.trg_vocab));
            }
            Err(msg) => {
                io.note(&format!("line {}: {msg}; skipped", i + 1))?;
                skipped += 1;
                outputs.push(SKIP_MARKER.to_string());
                alignments.push(Links::new());
            }
        }
    }

    match path(m, "output") {
        Some(p) => write_lines(&p, &outputs)?,
        None => {
            for line in &outputs {
                io.say(line)?;
            }
        }
    }
    if let Some(p) = path(m, "alignments") {
        write_alignments(&p, &alignments)?;
    }
    if let Some(p) = path(m, "dump-attention") {
        dump.write(&p)?;
    }
    io.note(&format!("translated {} lines, skipped {skipped}", outputs.len() - skipped))
}
