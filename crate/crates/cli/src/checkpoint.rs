//! Checkpoint container.
//!
//! The first line is a JSON manifest: model configuration, both
//! vocabularies and, per tensor, its name, shape, element type and byte
//! offset. Everything after that newline is one block of little-endian
//! 32-bit floats, tensors back to back in manifest order, offsets counted
//! from the start of the block.

use std::fs;
use std::path::Path;

use kvmem_core::data::Vocabulary;
use kvmem_core::model::{ModelConfig, Seq2Seq, Variant};
use kvmem_core::params::ModelParams;
use kvmem_core::{Shape, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const FORMAT: &str = "kvmem-checkpoint";
pub const VERSION: u32 = 1;
const DTYPE: &str = "f32le";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
}

/// Mirror of [`ModelConfig`] for the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub variant: String,
    pub src_vocab: usize,
    pub trg_vocab: usize,
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

impl From<&ModelConfig> for ModelDoc {
    fn from(c: &ModelConfig) -> Self {
        ModelDoc {
            variant: c.variant.name().to_string(),
            src_vocab: c.src_vocab,
            trg_vocab: c.trg_vocab,
            embed_dim: c.embed_dim,
            hidden_dim: c.hidden_dim,
            rounds: c.rounds,
            beam_size: c.beam_size,
            max_decode_len: c.max_decode_len,
            length_norm: c.length_norm,
            lambda: c.lambda,
            dropout: c.dropout,
            share_addressing: c.share_addressing,
            gate_bias: c.gate_bias,
        }
    }
}

impl ModelDoc {
    fn to_config(&self) -> kvmem_core::Result<ModelConfig> {
        Ok(ModelConfig {
            variant: Variant::parse(&self.variant)?,
            src_vocab: self.src_vocab,
            trg_vocab: self.trg_vocab,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            rounds: self.rounds,
            beam_size: self.beam_size,
            max_decode_len: self.max_decode_len,
            length_norm: self.length_norm,
            lambda: self.lambda,
            dropout: self.dropout,
            share_addressing: self.share_addressing,
            gate_bias: self.gate_bias,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub model: ModelDoc,
    pub src_vocab: Vec<(String, u64)>,
    pub trg_vocab: Vec<(String, u64)>,
    pub tensors: Vec<TensorEntry>,
    pub data_bytes: u64,
}

/// A trained model with the vocabularies it was trained on.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Seq2Seq<f64>,
    pub src_vocab: Vocabulary,
    pub trg_vocab: Vocabulary,
}

fn entries(v: &Vocabulary) -> Vec<(String, u64)> {
    v.entries().map(|(t, c)| (t.to_string(), c)).collect()
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = Vec::new();
        let mut block = Vec::new();
        for (name, t) in self.model.params().iter() {
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: t.shape().dims().to_vec(),
                dtype: DTYPE.to_string(),
                offset: block.len() as u64,
            });
            for &x in t.data() {
                block.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: FORMAT.to_string(),
            version: VERSION,
            model: ModelDoc::from(self.model.config()),
            src_vocab: entries(&self.src_vocab),
            trg_vocab: entries(&self.trg_vocab),
            tensors,
            data_bytes: block.len() as u64,
        };
        let mut out = serde_json::to_vec(&manifest).expect("manifest serializes");
        out.push(b'\n');
        out.extend_from_slice(&block);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or("no manifest line")?;
        let manifest: Manifest =
            serde_json::from_slice(&bytes[..newline]).map_err(|e| format!("manifest: {e}"))?;
        if manifest.format != FORMAT || manifest.version != VERSION {
            return Err(format!(
                "unsupported container {} version {}",
                manifest.format, manifest.version
            ));
        }
        let block = &bytes[newline + 1..];
        if block.len() as u64 != manifest.data_bytes {
            return Err(format!(
                "data block holds {} bytes, manifest promises {}",
                block.len(),
                manifest.data_bytes
            ));
        }
        let mut params = ModelParams::new();
        for entry in &manifest.tensors {
            if entry.dtype != DTYPE {
                return Err(format!("{}: unsupported dtype {}", entry.name, entry.dtype));
            }
            let shape = Shape::from_dims(&entry.shape).map_err(|e| format!("{}: {e}", entry.name))?;
            let start = usize::try_from(entry.offset).map_err(|_| format!("{}: offset overflow", entry.name))?;
            let end = start
                .checked_add(shape.numel() * 4)
                .filter(|&e| e <= block.len())
                .ok_or_else(|| format!("{}: data runs past the block", entry.name))?;
            let data = block[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let tensor = Tensor::new(shape, data).map_err(|e| format!("{}: {e}", entry.name))?;
            params.add(&entry.name, tensor).map_err(|e| e.to_string())?;
        }
        let config = manifest.model.to_config().map_err(|e| e.to_string())?;
        let model = Seq2Seq::from_params(config, params).map_err(|e| e.to_string())?;
        let src_vocab = Vocabulary::from_entries(manifest.src_vocab).map_err(|e| format!("source vocabulary: {e}"))?;
        let trg_vocab = Vocabulary::from_entries(manifest.trg_vocab).map_err(|e| format!("target vocabulary: {e}"))?;
        if src_vocab.len() != model.config().src_vocab || trg_vocab.len() != model.config().trg_vocab {
            return Err("vocabulary sizes disagree with the model".into());
        }
        Ok(Checkpoint {
            model,
            src_vocab,
            trg_vocab,
        })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|msg| CliError::format(path, msg))
    }
}
