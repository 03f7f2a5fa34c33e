//! Text file formats: corpora, vocabularies, alignments and attention dumps.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use kvmem_core::data::vocab::UNK_TOKEN;
use kvmem_core::data::{pharaoh, Links, Vocabulary};
use kvmem_core::eval::{AttentionTrace, TraceStep};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Writes `lines`, each terminated by a newline.
pub fn write_lines<I, S>(path: &Path, lines: I) -> CliResult<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::io(path, e))?;
    }
    out.flush().map_err(|e| CliError::io(path, e))
}

pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_string).collect()
}

/// One whitespace-tokenized sentence per line.
pub fn read_corpus(path: &Path) -> CliResult<Vec<Vec<String>>> {
    Ok(read_text(path)?.lines().map(tokenize).collect())
}

pub fn write_corpus(path: &Path, sentences: &[Vec<String>]) -> CliResult<()> {
    write_lines(path, sentences.iter().map(|s| s.join(" ")))
}

/// Reads two line-aligned files, failing if their lengths differ.
pub fn read_parallel(src: &Path, trg: &Path) -> CliResult<(Vec<Vec<String>>, Vec<Vec<String>>)> {
    let s = read_corpus(src)?;
    let t = read_corpus(trg)?;
    if s.len() != t.len() {
        return Err(CliError::Data(format!(
            "{} has {} lines but {} has {}",
            src.display(),
            s.len(),
            trg.display(),
            t.len()
        )));
    }
    Ok((s, t))
}

pub fn format_vocab(v: &Vocabulary) -> String {
    v.entries().map(|(tok, count)| format!("{tok}\t{count}\n")).collect()
}

pub fn parse_vocab(text: &str) -> Result<Vocabulary, String> {
    let entries = text
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let (tok, count) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: expected token<TAB>count", i + 1))?;
            let count = count
                .trim()
                .parse()
                .map_err(|_| format!("line {}: bad count `{count}`", i + 1))?;
            Ok((tok.to_string(), count))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Vocabulary::from_entries(entries).map_err(|e| e.to_string())
}

pub fn read_vocab(path: &Path) -> CliResult<Vocabulary> {
    parse_vocab(&read_text(path)?).map_err(|msg| CliError::format(path, msg))
}

pub fn write_vocab(path: &Path, v: &Vocabulary) -> CliResult<()> {
    fs::write(path, format_vocab(v)).map_err(|e| CliError::io(path, e))
}

pub fn read_alignments(path: &Path) -> CliResult<Vec<Links>> {
    pharaoh::parse(&read_text(path)?).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn write_alignments(path: &Path, sets: &[Links]) -> CliResult<()> {
    write_lines(path, sets.iter().map(pharaoh::format_line))
}

/// One sentence of an attention dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpEntry {
    /// 0-based input line.
    pub line: usize,
    /// Source tokens, eos included.
    pub source: Vec<String>,
    pub source_ids: Vec<u32>,
    pub target: Vec<String>,
    pub target_ids: Vec<u32>,
    /// `rounds[r][t][j]`: attention of round `r` at target step `t` on
    /// source slot `j`.
    pub rounds: Vec<Vec<Vec<f64>>>,
}

impl DumpEntry {
    pub fn from_trace(line: usize, trace: &AttentionTrace, src_vocab: &Vocabulary, trg_vocab: &Vocabulary) -> Self {
        let target_ids = trace.target();
        DumpEntry {
            line,
            source: spell(src_vocab, &trace.source),
            source_ids: trace.source.clone(),
            target: spell(trg_vocab, &target_ids),
            target_ids,
            rounds: (0..trace.rounds()).map(|r| trace.round_matrix(r)).collect(),
        }
    }

    pub fn to_trace(&self) -> Result<AttentionTrace, String> {
        let steps = self.target_ids.len();
        if self.rounds.iter().any(|m| m.len() != steps) {
            return Err(format!("line {}: round matrices need {steps} rows", self.line));
        }
        let mut trace = AttentionTrace::new(self.source_ids.clone());
        for (t, &token) in self.target_ids.iter().enumerate() {
            trace.steps.push(TraceStep {
                token,
                rounds: self.rounds.iter().map(|m| m[t].clone()).collect(),
            });
        }
        trace.validate(1e-6).map_err(|e| format!("line {}: {e}", self.line))?;
        Ok(trace)
    }
}

/// Every id spelled out, reserved tokens included.
fn spell(v: &Vocabulary, ids: &[u32]) -> Vec<String> {
    ids.iter()
        .map(|&id| v.token(id).unwrap_or(UNK_TOKEN).to_string())
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttentionDump {
    pub sentences: Vec<DumpEntry>,
}

impl AttentionDump {
    pub fn to_json(&self) -> String {
        // Serializing plain numbers and strings cannot fail.
        serde_json::to_string_pretty(self).expect("attention dump serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        Self::from_json(&read_text(path)?).map_err(|msg| CliError::format(path, msg))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| CliError::io(path, e))
    }
}
