//! Training from a configuration file plus command-line overrides.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::parser::ValueSource;
use clap::{value_parser, Arg, ArgMatches, Command};
use kvmem_core::data::{AlignedPair, ParallelCorpus, Vocabulary};
use kvmem_core::model::Seq2Seq;
use kvmem_core::training::{train, EpochReport};

use super::{required_path, Streams};
use crate::checkpoint::Checkpoint;
use crate::config::{RunConfig, KEYS};
use crate::error::{CliError, CliResult};
use crate::io::{read_parallel, write_vocab};

/// Short spellings for the most frequently changed keys.
const ALIASES: &[(&str, &str)] = &[
    ("model.variant", "variant"),
    ("model.rounds", "rounds"),
    ("model.lambda", "lambda"),
    ("train.seed", "seed"),
    ("train.epochs", "epochs"),
    ("paths.init_from", "init-from"),
    ("paths.output", "output"),
];

pub fn args() -> Command {
    let mut cmd = Command::new("train")
        .about("Train a model; every config key can be overridden with --<dotted.key> <value>")
        .arg(
            Arg::new("config")
                .long("config")
                .required(true)
                .value_parser(value_parser!(PathBuf))
                .help("TOML configuration file"),
        );
    for key in KEYS {
        let mut arg = Arg::new(key.name).long(key.name).value_name("VALUE").help(key.help);
        if let Some((_, alias)) = ALIASES.iter().find(|(k, _)| *k == key.name) {
            arg = arg.visible_alias(alias);
        }
        cmd = cmd.arg(arg);
    }
    cmd
}

/// Dotted-key overrides given on the command line.
pub fn overrides(m: &ArgMatches) -> Vec<(String, String)> {
    KEYS.iter()
        .filter(|k| m.value_source(k.name) == Some(ValueSource::CommandLine))
        .filter_map(|k| m.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone())))
        .collect()
}

pub fn exec(m: &ArgMatches, io: &mut Streams<'_>) -> CliResult<()> {
    let cfg = RunConfig::from_file(&required_path(m, "config"), &overrides(m))?;
    run_training(&cfg, io)
}

/// Files written by [`run_training`] inside `paths.output`.
pub const FINAL_CHECKPOINT: &str = "model.ckpt";
pub const LOG_FILE: &str = "train.log";

pub fn run_training(cfg: &RunConfig, io: &mut Streams<'_>) -> CliResult<()> {
    for line in cfg.to_toml().lines() {
        io.note(&format!("config {line}"))?;
    }
    let (src, trg) = read_parallel(&cfg.paths.train_src, &cfg.paths.train_trg)?;
    let corpus = to_corpus(src, trg);
    let valid = match (&cfg.paths.valid_src, &cfg.paths.valid_trg) {
        (Some(s), Some(t)) => {
            let (s, t) = read_parallel(s, t)?;
            Some(to_corpus(s, t))
        }
        _ => None,
    };
    if corpus.is_empty() {
        return Err(CliError::Data(format!("{} is empty", cfg.paths.train_src.display())));
    }

    let pretrained = cfg.paths.init_from.as_deref().map(Checkpoint::load).transpose()?;
    // A pretrained model fixes the vocabularies its embeddings index.
    let (src_vocab, trg_vocab) = match &pretrained {
        Some(p) => (p.src_vocab.clone(), p.trg_vocab.clone()),
        None => (
            Vocabulary::build(&corpus.sources(), cfg.src_vocab_size)?,
            Vocabulary::build(&corpus.targets(), cfg.trg_vocab_size)?,
        ),
    };
    let model_cfg = cfg.model_config(src_vocab.len(), trg_vocab.len());
    // Training runs in single precision; checkpoints store f32 either way.
    let mut model: Seq2Seq<f32> = Seq2Seq::initialized(model_cfg, cfg.train.seed)?;
    if let Some(p) = &pretrained {
        let copied = model.init_from_pretrained(&p.model.params().cast())?;
        io.note(&format!(
            "initialized {copied} of {} tensors from {}",
            model.params().len(),
            cfg.paths.init_from.as_deref().unwrap_or(Path::new("")).display()
        ))?;
    }

    let out = &cfg.paths.output;
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let config_path = out.join("config.toml");
    fs::write(&config_path, cfg.to_toml()).map_err(|e| CliError::io(&config_path, e))?;
    write_vocab(&out.join("src.vocab"), &src_vocab)?;
    write_vocab(&out.join("trg.vocab"), &trg_vocab)?;

    let train_pairs = corpus.encode(&src_vocab, &trg_vocab);
    let valid_pairs = valid.map(|v| v.encode(&src_vocab, &trg_vocab)).unwrap_or_default();
    let log_path = out.join(LOG_FILE);
    let mut log = fs::File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let start = Instant::now();
    let mut failure: Option<CliError> = None;
    let result = train(&mut model, &train_pairs, &valid_pairs, &cfg.train, |report, current| {
        let mut step = || -> CliResult<()> {
            let line = log_line(report, start.elapsed().as_secs_f64());
            writeln!(log, "{line}").map_err(|e| CliError::io(&log_path, e))?;
            io.say(&line)?;
            io.note(&format!(
                "epoch {} nll {:.4} penalty {:.4} lambda {} dropped {} skipped {} clamped {}",
                report.epoch,
                report.train.nll,
                report.train.penalty,
                current.config().lambda,
                report.dropped_pairs,
                report.skipped_batches,
                report.clamped
            ))?;
            if report.checkpoint_due {
                let ck = Checkpoint {
                    model: current.cast(),
                    src_vocab: src_vocab.clone(),
                    trg_vocab: trg_vocab.clone(),
                };
                ck.save(&out.join(format!("epoch{}.ckpt", report.epoch)))?;
            }
            Ok(())
        };
        step().map_err(|e| {
            failure = Some(e);
            kvmem_core::Error::Contract("stopped by the epoch hook".into())
        })
    });
    if let Some(e) = failure {
        return Err(e);
    }
    result?;
    let path = out.join(FINAL_CHECKPOINT);
    Checkpoint {
        model: model.cast(),
        src_vocab,
        trg_vocab,
    }
    .save(&path)?;
    io.note(&format!("saved {}", path.display()))
}

fn to_corpus(src: Vec<Vec<String>>, trg: Vec<Vec<String>>) -> ParallelCorpus {
    ParallelCorpus::new(src.into_iter().zip(trg).map(|(s, t)| AlignedPair::new(s, t)).collect())
}

/// `epoch, train loss, valid loss, valid BLEU, seconds`, tab-separated;
/// `-` where no validation ran.
pub fn log_line(r: &EpochReport, seconds: f64) -> String {
    let valid_loss = r.valid.as_ref().map_or("-".to_string(), |v| format!("{:.6}", v.loss));
    let bleu = r.valid_bleu.map_or("-".to_string(), |b| format!("{b:.2}"));
    format!("{}\t{:.6}\t{valid_loss}\t{bleu}\t{seconds:.1}", r.epoch, r.train.loss)
}
