//! Finite-difference check of the full training loss on a tiny model.

use std::path::PathBuf;

use clap::{value_parser, Arg, ArgMatches, Command};
use kvmem_core::autodiff::GradCheckReport;
use kvmem_core::data::vocab::{EOS, RESERVED};
use kvmem_core::model::{ModelConfig, Seq2Seq, Variant};
use kvmem_core::training::check_model_gradients;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{path, value, Streams};
use crate::config::{load_model_settings, ModelSettings};
use crate::error::{CliError, CliResult};
use crate::io::read_text;

pub const TOLERANCE: f64 = 1e-4;
/// Source length with eos.
pub const SRC_LEN: usize = 4;
/// Target length with eos.
pub const TRG_LEN: usize = 3;
const WORDS: usize = 6;

pub fn args() -> Command {
    Command::new("grad-check")
        .about("Compare analytic and finite-difference gradients for the baseline and each round count")
        .arg(
            Arg::new("config")
                .long("config")
                .value_parser(value_parser!(PathBuf))
                .help("take model.* options (lambda, gate_bias, share_addressing) from this file"),
        )
        .arg(
            Arg::new("rounds")
                .long("rounds")
                .default_value("2")
                .value_parser(value_parser!(usize))
                .help("memory variants are checked for 1..=ROUNDS rounds"),
        )
        .arg(
            Arg::new("dim")
                .long("dim")
                .default_value("8")
                .value_parser(value_parser!(usize))
                .help("embedding and hidden size"),
        )
        .arg(
            Arg::new("eps")
                .long("eps")
                .default_value("1e-5")
                .value_parser(value_parser!(f64)),
        )
        .arg(
            Arg::new("seed")
                .long("seed")
                .default_value("1")
                .value_parser(value_parser!(u64)),
        )
}

/// One checked model.
#[derive(Clone, Debug)]
pub struct VariantCheck {
    pub label: String,
    pub report: GradCheckReport,
}

/// Checks the baseline and the memory model at 1..=`rounds` rounds on one
/// random sentence pair. Dropout is always off.
pub fn check_variants(
    base: &ModelSettings,
    rounds: usize,
    dim: usize,
    eps: f64,
    seed: u64,
) -> CliResult<Vec<VariantCheck>> {
    if rounds == 0 || dim == 0 {
        return Err(CliError::Usage("--rounds and --dim must be at least 1".into()));
    }
    let vocab = RESERVED + WORDS;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentence = |len: usize| -> Vec<u32> {
        let mut ids: Vec<u32> = (1..len).map(|_| rng.random_range(RESERVED..vocab) as u32).collect();
        ids.push(EOS);
        ids
    };
    let src = sentence(SRC_LEN);
    let trg = sentence(TRG_LEN);
    let mut variants = vec![(Variant::Baseline, 1, "baseline".to_string())];
    variants.extend((1..=rounds).map(|r| (Variant::KvMemAtt, r, format!("kvmematt-R{r}"))));
    variants
        .into_iter()
        .map(|(variant, r, label)| {
            let mut cfg = ModelConfig::new(variant, vocab, vocab);
            cfg.embed_dim = dim;
            cfg.hidden_dim = dim;
            cfg.rounds = r;
            cfg.lambda = base.lambda;
            cfg.share_addressing = base.share_addressing;
            cfg.gate_bias = base.gate_bias;
            cfg.dropout = 0.0;
            let model: Seq2Seq<f64> = Seq2Seq::initialized(cfg, seed)?;
            let report = check_model_gradients(&model, &src, &trg, eps, seed)?;
            Ok(VariantCheck { label, report })
        })
        .collect()
}

pub fn exec(m: &ArgMatches, io: &mut Streams<'_>) -> CliResult<()> {
    let base = match path(m, "config") {
        Some(p) => load_model_settings(&read_text(&p)?)?,
        None => load_model_settings("")?,
    };
    let checks = check_variants(&base, value(m, "rounds"), value(m, "dim"), value(m, "eps"), value(m, "seed"))?;
    let mut failed = Vec::new();
    for c in &checks {
        let ok = c.report.passes(TOLERANCE);
        io.say(&format!(
            "{}\tmax_rel_err\t{:.3e}\tchecked\t{}\t{}",
            c.label,
            c.report.max_rel_err,
            c.report.checked,
            if ok { "PASS" } else { "FAIL" }
        ))?;
        for p in &c.report.per_param {
            io.say(&format!("  {}\t{:.3e}\t{}", p.name, p.max_rel_err, p.checked))?;
        }
        if !ok {
            failed.push(c.label.as_str());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradient check above {TOLERANCE:e} for {}",
            failed.join(", ")
        )))
    }
}
