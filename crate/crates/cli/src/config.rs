//! Run configuration: a flat namespace of dotted keys, read from a TOML
//! document and overridable one key at a time from the command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kvmem_core::model::{ModelConfig, Variant};
use kvmem_core::training::TrainConfig;
use toml::Value;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Str,
    Int,
    Float,
    Bool,
}

#[derive(Clone, Copy, Debug)]
pub struct Key {
    pub name: &'static str,
    pub kind: Kind,
    pub required: bool,
    pub help: &'static str,
}

const fn key(name: &'static str, kind: Kind, required: bool, help: &'static str) -> Key {
    Key {
        name,
        kind,
        required,
        help,
    }
}

/// Every accepted key. Optional keys without a default are simply absent.
pub const KEYS: &[Key] = &[
    key("model.variant", Kind::Str, true, "baseline or kvmematt"),
    key("model.embed_dim", Kind::Int, false, "word embedding size"),
    key("model.hidden_dim", Kind::Int, false, "recurrent state size"),
    key("model.rounds", Kind::Int, false, "memory rounds per decoding step"),
    key("model.beam_size", Kind::Int, false, "beam width at test time"),
    key("model.max_decode_len", Kind::Int, false, "output length limit"),
    key("model.length_norm", Kind::Bool, false, "rank beam hypotheses by per-token log-probability"),
    key("model.lambda", Kind::Float, false, "weight of the eos attention penalty"),
    key("model.dropout", Kind::Float, false, "readout dropout rate"),
    key("model.share_addressing", Kind::Bool, false, "reuse query addressing weights for the key update"),
    key("model.gate_bias", Kind::Bool, false, "bias terms on the Forget and Add gates"),
    key("data.src_vocab_size", Kind::Int, false, "source vocabulary limit, reserved tokens included"),
    key("data.trg_vocab_size", Kind::Int, false, "target vocabulary limit, reserved tokens included"),
    key("train.batch_size", Kind::Int, false, "sentences per update"),
    key("train.max_len", Kind::Int, false, "longer training pairs are skipped"),
    key("train.epochs", Kind::Int, false, "passes over the training data"),
    key("train.seed", Kind::Int, false, "seed for initialization, shuffling and dropout"),
    key("train.rho", Kind::Float, false, "AdaDelta decay"),
    key("train.eps", Kind::Float, false, "AdaDelta epsilon"),
    key("train.clip_norm", Kind::Float, false, "gradient norm limit (off when absent)"),
    key("train.validate_every", Kind::Int, false, "epochs between validations, 0 for never"),
    key("train.checkpoint_every", Kind::Int, false, "epochs between checkpoints, 0 for final only"),
    key("paths.train_src", Kind::Str, true, "training source file"),
    key("paths.train_trg", Kind::Str, true, "training target file"),
    key("paths.valid_src", Kind::Str, false, "validation source file"),
    key("paths.valid_trg", Kind::Str, false, "validation target file"),
    key("paths.output", Kind::Str, true, "directory for checkpoints, vocabularies and the log"),
    key("paths.init_from", Kind::Str, false, "checkpoint whose shared tensors initialize the model"),
];

pub fn lookup(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSettings {
    pub variant: Variant,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub rounds: usize,
    pub beam_size: usize,
    pub max_decode_len: usize,
    pub length_norm: bool,
    pub lambda: f64,
    pub dropout: f64,
    pub share_addressing: bool,
    pub gate_bias: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Paths {
    pub train_src: PathBuf,
    pub train_trg: PathBuf,
    pub valid_src: Option<PathBuf>,
    pub valid_trg: Option<PathBuf>,
    pub output: PathBuf,
    pub init_from: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelSettings,
    pub src_vocab_size: usize,
    pub trg_vocab_size: usize,
    pub train: TrainConfig,
    pub paths: Paths,
}

impl RunConfig {
    /// Parses a TOML document, applies `overrides` (dotted key, raw text)
    /// and validates the result. All missing required keys are reported in
    /// one error.
    pub fn load(text: &str, overrides: &[(String, String)]) -> CliResult<Self> {
        let mut flat = flatten_document(text)?;
        for (name, raw) in overrides {
            let key = lookup(name).ok_or_else(|| CliError::Config(format!("unknown key `{name}`")))?;
            flat.insert(name.clone(), parse_raw(key, raw)?);
        }
        Self::from_flat(&flat)
    }

    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::load(&text, overrides).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn from_flat(flat: &BTreeMap<String, Value>) -> CliResult<Self> {
        let missing: Vec<&str> = KEYS
            .iter()
            .filter(|k| k.required && !flat.contains_key(k.name))
            .map(|k| k.name)
            .collect();
        if !missing.is_empty() {
            return Err(CliError::Config(format!("missing required keys: {}", missing.join(", "))));
        }
        let get = Getter(flat);
        let train_defaults = TrainConfig::default();
        let cfg = RunConfig {
            model: model_settings(&get)?,
            src_vocab_size: get.int("data.src_vocab_size")?.unwrap_or(DEFAULT_VOCAB_SIZE),
            trg_vocab_size: get.int("data.trg_vocab_size")?.unwrap_or(DEFAULT_VOCAB_SIZE),
            train: TrainConfig {
                batch_size: get.int("train.batch_size")?.unwrap_or(train_defaults.batch_size),
                max_len: get.int("train.max_len")?.unwrap_or(train_defaults.max_len),
                epochs: get.int("train.epochs")?.unwrap_or(train_defaults.epochs),
                seed: get.int("train.seed")?.map_or(train_defaults.seed, |s| s as u64),
                rho: get.float("train.rho")?.unwrap_or(train_defaults.rho),
                eps: get.float("train.eps")?.unwrap_or(train_defaults.eps),
                clip_norm: get.float("train.clip_norm")?,
                validate_every: get.int("train.validate_every")?.unwrap_or(train_defaults.validate_every),
                checkpoint_every: get.int("train.checkpoint_every")?.unwrap_or(train_defaults.checkpoint_every),
            },
            paths: Paths {
                train_src: get.path("paths.train_src")?.unwrap_or_default(),
                train_trg: get.path("paths.train_trg")?.unwrap_or_default(),
                valid_src: get.path("paths.valid_src")?,
                valid_trg: get.path("paths.valid_trg")?,
                output: get.path("paths.output")?.unwrap_or_default(),
                init_from: get.path("paths.init_from")?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model_config(DEFAULT_VOCAB_SIZE, DEFAULT_VOCAB_SIZE)
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.src_vocab_size <= kvmem_core::data::vocab::RESERVED
            || self.trg_vocab_size <= kvmem_core::data::vocab::RESERVED
        {
            return Err(CliError::Config("vocabulary limits must exceed the 4 reserved tokens".into()));
        }
        if self.paths.valid_src.is_some() != self.paths.valid_trg.is_some() {
            return Err(CliError::Config(
                "paths.valid_src and paths.valid_trg must be given together".into(),
            ));
        }
        Ok(())
    }

    pub fn model_config(&self, src_vocab: usize, trg_vocab: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            variant: m.variant,
            src_vocab,
            trg_vocab,
            embed_dim: m.embed_dim,
            hidden_dim: m.hidden_dim,
            rounds: m.rounds,
            beam_size: m.beam_size,
            max_decode_len: m.max_decode_len,
            length_norm: m.length_norm,
            lambda: m.lambda,
            dropout: m.dropout,
            share_addressing: m.share_addressing,
            gate_bias: m.gate_bias,
        }
    }

    /// Every key with a value, in table order.
    pub fn to_flat(&self) -> Vec<(&'static str, Value)> {
        let m = &self.model;
        let t = &self.train;
        let p = &self.paths;
        let int = |v: usize| Value::Integer(v as i64);
        let path = |v: &Path| Value::String(v.display().to_string());
        let mut out = vec![
            ("model.variant", Value::String(m.variant.name().into())),
            ("model.embed_dim", int(m.embed_dim)),
            ("model.hidden_dim", int(m.hidden_dim)),
            ("model.rounds", int(m.rounds)),
            ("model.beam_size", int(m.beam_size)),
            ("model.max_decode_len", int(m.max_decode_len)),
            ("model.length_norm", Value::Boolean(m.length_norm)),
            ("model.lambda", Value::Float(m.lambda)),
            ("model.dropout", Value::Float(m.dropout)),
            ("model.share_addressing", Value::Boolean(m.share_addressing)),
            ("model.gate_bias", Value::Boolean(m.gate_bias)),
            ("data.src_vocab_size", int(self.src_vocab_size)),
            ("data.trg_vocab_size", int(self.trg_vocab_size)),
            ("train.batch_size", int(t.batch_size)),
            ("train.max_len", int(t.max_len)),
            ("train.epochs", int(t.epochs)),
            ("train.seed", Value::Integer(t.seed as i64)),
            ("train.rho", Value::Float(t.rho)),
            ("train.eps", Value::Float(t.eps)),
        ];
        if let Some(c) = t.clip_norm {
            out.push(("train.clip_norm", Value::Float(c)));
        }
        out.push(("train.validate_every", int(t.validate_every)));
        out.push(("train.checkpoint_every", int(t.checkpoint_every)));
        out.push(("paths.train_src", path(&p.train_src)));
        out.push(("paths.train_trg", path(&p.train_trg)));
        if let (Some(s), Some(t)) = (&p.valid_src, &p.valid_trg) {
            out.push(("paths.valid_src", path(s)));
            out.push(("paths.valid_trg", path(t)));
        }
        out.push(("paths.output", path(&p.output)));
        if let Some(i) = &p.init_from {
            out.push(("paths.init_from", path(i)));
        }
        out
    }

    /// One `dotted.key = value` line per key; parses back to an equal
    /// configuration.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_flat() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

pub const DEFAULT_VOCAB_SIZE: usize = 30_000;

/// Reads only the `model.*` keys of a document (others must still be known
/// keys); the variant defaults to the baseline.
pub fn load_model_settings(text: &str) -> CliResult<ModelSettings> {
    let flat = flatten_document(text)?;
    model_settings(&Getter(&flat))
}

fn model_settings(get: &Getter<'_>) -> CliResult<ModelSettings> {
    let defaults = ModelConfig::new(Variant::Baseline, 0, 0);
    let variant = match get.string("model.variant")? {
        Some(v) => Variant::parse(&v).map_err(|e| CliError::Config(e.to_string()))?,
        None => Variant::Baseline,
    };
    Ok(ModelSettings {
        variant,
        embed_dim: get.int("model.embed_dim")?.unwrap_or(defaults.embed_dim),
        hidden_dim: get.int("model.hidden_dim")?.unwrap_or(defaults.hidden_dim),
        rounds: get.int("model.rounds")?.unwrap_or(defaults.rounds),
        beam_size: get.int("model.beam_size")?.unwrap_or(defaults.beam_size),
        max_decode_len: get.int("model.max_decode_len")?.unwrap_or(defaults.max_decode_len),
        length_norm: get.bool("model.length_norm")?.unwrap_or(defaults.length_norm),
        lambda: get.float("model.lambda")?.unwrap_or(defaults.lambda),
        dropout: get.float("model.dropout")?.unwrap_or(defaults.dropout),
        share_addressing: get.bool("model.share_addressing")?.unwrap_or(defaults.share_addressing),
        gate_bias: get.bool("model.gate_bias")?.unwrap_or(defaults.gate_bias),
    })
}

fn flatten_document(text: &str) -> CliResult<BTreeMap<String, Value>> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    let mut flat = BTreeMap::new();
    flatten_into(&mut flat, "", Value::Table(table));
    let unknown: Vec<&str> = flat.keys().filter(|k| lookup(k).is_none()).map(String::as_str).collect();
    if !unknown.is_empty() {
        return Err(CliError::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    Ok(flat)
}

fn flatten_into(flat: &mut BTreeMap<String, Value>, prefix: &str, value: Value) {
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                let name = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
                flatten_into(flat, &name, v);
            }
        }
        other => {
            flat.insert(prefix.to_string(), other);
        }
    }
}

/// Interprets command-line text for a key.
fn parse_raw(key: &Key, raw: &str) -> CliResult<Value> {
    let bad = || CliError::Config(format!("`{raw}` is not a valid value for {}", key.name));
    Ok(match key.kind {
        Kind::Str => Value::String(raw.to_string()),
        Kind::Int => Value::Integer(raw.parse().map_err(|_| bad())?),
        Kind::Float => Value::Float(raw.parse().map_err(|_| bad())?),
        Kind::Bool => Value::Boolean(raw.parse().map_err(|_| bad())?),
    })
}

struct Getter<'a>(&'a BTreeMap<String, Value>);

impl Getter<'_> {
    fn wrong(&self, name: &str, want: &str) -> CliError {
        CliError::Config(format!("{name} must be {want}, got {}", self.0[name]))
    }

    fn string(&self, name: &str) -> CliResult<Option<String>> {
        match self.0.get(name) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.wrong(name, "a string")),
        }
    }

    fn path(&self, name: &str) -> CliResult<Option<PathBuf>> {
        Ok(self.string(name)?.map(PathBuf::from))
    }

    fn int(&self, name: &str) -> CliResult<Option<usize>> {
        match self.0.get(name) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(_) => Err(self.wrong(name, "a non-negative integer")),
        }
    }

    fn float(&self, name: &str) -> CliResult<Option<f64>> {
        match self.0.get(name) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(_) => Err(self.wrong(name, "a number")),
        }
    }

    fn bool(&self, name: &str) -> CliResult<Option<bool>> {
        match self.0.get(name) {
            None => Ok(None),
            Some(Value::Boolean(b)) => Ok(Some(*b)),
            Some(_) => Err(self.wrong(name, "true or false")),
        }
    }
}
