//! Metrics over files: BLEU, AER and attention coverage.

use std::path::PathBuf;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use kvmem_core::eval::{
    bleu, corpus_aer, coverage_report, CoverageSummary, Smoothing, OVER_THRESHOLD, UNDER_THRESHOLD,
};

use super::{required_path, value, Streams};
use crate::error::{CliError, CliResult};
use crate::io::{read_alignments, read_corpus, AttentionDump};

pub fn args() -> Command {
    let file = |name: &'static str, help: &'static str| {
        Arg::new(name)
            .long(name)
            .required(true)
            .value_parser(value_parser!(PathBuf))
            .help(help)
    };
    Command::new("eval")
        .about("Score translations, alignments or attention dumps")
        .subcommand_required(true)
        .subcommand(
            Command::new("bleu")
                .about("Corpus BLEU against one reference per line")
                .arg(file("hyp", "system output"))
                .arg(file("ref", "references"))
                .arg(
                    Arg::new("max-n")
                        .long("max-n")
                        .default_value("4")
                        .value_parser(value_parser!(usize)),
                )
                .arg(
                    Arg::new("smooth")
                        .long("smooth")
                        .action(ArgAction::SetTrue)
                        .help("add-one smoothing of every n-gram precision"),
                )
                .arg(
                    Arg::new("lowercase")
                        .long("lowercase")
                        .action(ArgAction::SetTrue)
                        .help("compare tokens case-insensitively"),
                ),
        )
        .subcommand(
            Command::new("aer")
                .about("Alignment error rate of Pharaoh files, all gold links sure")
                .arg(file("hyp", "predicted alignments"))
                .arg(file("gold", "gold alignments")),
        )
        .subcommand(
            Command::new("coverage")
                .about("Under- and over-translated source words from an attention dump")
                .arg(file("dump", "attention dump"))
                .arg(
                    Arg::new("under")
                        .long("under")
                        .value_parser(value_parser!(f64))
                        .help("mass below which a word counts as under-translated [default: 0.2]"),
                )
                .arg(
                    Arg::new("over")
                        .long("over")
                        .value_parser(value_parser!(f64))
                        .help("mass above which a word counts as over-translated [default: 2.0]"),
                ),
        )
}

pub fn exec(m: &ArgMatches, io: &mut Streams<'_>) -> CliResult<()> {
    match m.subcommand() {
        Some(("bleu", m)) => {
            let lower = m.get_flag("lowercase");
            let load = |id: &str| -> CliResult<Vec<Vec<String>>> {
                let mut c = read_corpus(&required_path(m, id))?;
                if lower {
                    c.iter_mut().flatten().for_each(|t| *t = t.to_lowercase());
                }
                Ok(c)
            };
            let (hyp, reference) = (load("hyp")?, load("ref")?);
            check_lines(hyp.len(), reference.len())?;
            let smoothing = if m.get_flag("smooth") {
                Smoothing::AddOne
            } else {
                Smoothing::None
            };
            let score = bleu(&hyp, &reference, value(m, "max-n"), smoothing)?;
            io.say(&format!("bleu\t{score:.2}"))
        }
        Some(("aer", m)) => {
            let hyp = read_alignments(&required_path(m, "hyp"))?;
            let gold = read_alignments(&required_path(m, "gold"))?;
            check_lines(hyp.len(), gold.len())?;
            io.say(&format!("aer\t{:.4}", corpus_aer(hyp.iter().zip(&gold))))
        }
        Some(("coverage", m)) => {
            let path = required_path(m, "dump");
            let dump = AttentionDump::read(&path)?;
            let under = m.get_one::<f64>("under").copied().unwrap_or(UNDER_THRESHOLD);
            let over = m.get_one::<f64>("over").copied().unwrap_or(OVER_THRESHOLD);
            let mut total = CoverageSummary::default();
            for entry in &dump.sentences {
                let trace = entry.to_trace().map_err(|msg| CliError::format(&path, msg))?;
                total.add(&coverage_report(&trace, under, over));
            }
            io.say(&format!("words\t{}", total.words))?;
            io.say(&format!("under\t{:.2}", total.under_pct()))?;
            io.say(&format!("over\t{:.2}", total.over_pct()))
        }
        _ => Err(CliError::Usage("eval needs one of bleu, aer, coverage".into())),
    }
}

fn check_lines(hyp: usize, reference: usize) -> CliResult<()> {
    if hyp != reference {
        return Err(CliError::Data(format!(
            "{hyp} hypothesis lines but {reference} reference lines"
        )));
    }
    Ok(())
}
