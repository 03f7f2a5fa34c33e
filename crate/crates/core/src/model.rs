//! The encoder-decoder: parameter layout, per-step prediction and the
//! teacher-forced pass. Search lives in [`crate::decode`].

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{
    baseline_step, init_memories, kvmematt_step, project_keys, AddressingParams, AttnParams, DecoderParams,
    MemoryPair, RoundParams, StepResult, UpdateOverride, UpdateParams,
};
use crate::autodiff::{Graph, Parameterized, Var};
use crate::data::vocab::{BOS, RESERVED};
use crate::params::{ModelParams, ParamId};
use crate::rnn::{encode, init_decoder_state, unpadded_len, Annotations, EncoderParams, GruParams};
use crate::tensor::{Shape, Tensor};
use crate::{Error, Real, Result};

/// Scale of the uniform initializer.
pub const INIT_SCALE: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Baseline,
    KvMemAtt,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::KvMemAtt => "kvmematt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "kvmematt" => Ok(Variant::KvMemAtt),
            other => Err(Error::Config(format!(
                "unknown attention variant `{other}` (expected baseline or kvmematt)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub src_vocab: usize,
    pub trg_vocab: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Memory access rounds per decoding step. Ignored by the baseline.
    pub rounds: usize,
    pub beam_size: usize,
    pub max_decode_len: usize,
    pub length_norm: bool,
    /// Weight of the eos attention penalty.
    pub lambda: f64,
    /// Dropout rate on the readout layer during training.
    pub dropout: f64,
    /// Reuse the query-addressing weights for the key update.
    pub share_addressing: bool,
    /// Give the Forget and Add projections a bias.
    pub gate_bias: bool,
}

impl ModelConfig {
    /// Desk-scale defaults for the given variant and vocabulary sizes.
    pub fn new(variant: Variant, src_vocab: usize, trg_vocab: usize) -> Self {
        ModelConfig {
            variant,
            src_vocab,
            trg_vocab,
            embed_dim: 64,
            hidden_dim: 64,
            rounds: 1,
            beam_size: 4,
            max_decode_len: 50,
            length_norm: true,
            lambda: 1.0,
            dropout: 0.5,
            share_addressing: false,
            gate_bias: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.into()));
        if self.src_vocab <= RESERVED || self.trg_vocab <= RESERVED {
            return fail("vocabularies must hold more than the reserved tokens");
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return fail("embedding and hidden dimensions must be positive");
        }
        if self.rounds < 1 {
            return fail("rounds must be at least 1");
        }
        if self.beam_size < 1 {
            return fail("beam size must be at least 1");
        }
        if self.max_decode_len < 1 {
            return fail("max decode length must be at least 1");
        }
        if !(self.lambda >= 0.0) {
            return fail("lambda must be non-negative");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    /// Rounds actually run per step.
    pub fn effective_rounds(&self) -> usize {
        match self.variant {
            Variant::Baseline => 1,
            Variant::KvMemAtt => self.rounds,
        }
    }
}

/// Parameter handles of a model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub encoder: EncoderParams,
    pub init: ParamId,
    pub decoder: DecoderParams,
    pub attention: AttnParams,
    pub readout_w: ParamId,
    pub readout_b: ParamId,
    pub logits_w: ParamId,
}

fn register<T: Real>(cfg: &ModelConfig, params: &mut ModelParams<T>) -> Result<Layout> {
    let (e, d) = (cfg.embed_dim, cfg.hidden_dim);
    let k = 2 * d;
    let zeros = |r: usize, c: usize| Tensor::zeros(Shape::matrix(r, c));

    let src_emb = params.add("src.embedding", zeros(cfg.src_vocab, e))?;
    let encoder = EncoderParams {
        embedding: src_emb,
        forward: GruParams::register(params, "enc.forward", e, d)?,
        backward: GruParams::register(params, "enc.backward", e, d)?,
    };
    let init = params.add("dec.init", zeros(d, d))?;
    let trg_emb = params.add("trg.embedding", zeros(cfg.trg_vocab, e))?;
    let decoder = DecoderParams {
        embedding: trg_emb,
        query_gru: GruParams::register(params, "dec.query", e, d)?,
        state_gru: GruParams::register(params, "dec.state", k, d)?,
    };

    let mut rounds = Vec::new();
    for r in 1..=cfg.effective_rounds() {
        let query = AddressingParams::register(params, &format!("att.r{r}.query"), d, k, d)?;
        let update = match cfg.variant {
            Variant::Baseline => None,
            Variant::KvMemAtt => {
                let addressing = if cfg.share_addressing {
                    query
                } else {
                    AddressingParams::register(params, &format!("att.r{r}.update"), d, k, d)?
                };
                let forget = params.add(&format!("att.r{r}.forget"), zeros(d, k))?;
                let add = params.add(&format!("att.r{r}.add"), zeros(d, k))?;
                let (forget_bias, add_bias) = if cfg.gate_bias {
                    (
                        Some(params.add(&format!("att.r{r}.forget_bias"), Tensor::zeros(Shape::vector(k)))?),
                        Some(params.add(&format!("att.r{r}.add_bias"), Tensor::zeros(Shape::vector(k)))?),
                    )
                } else {
                    (None, None)
                };
                Some(UpdateParams {
                    addressing,
                    forget,
                    add,
                    forget_bias,
                    add_bias,
                })
            }
        };
        rounds.push(RoundParams { query, update });
    }

    Ok(Layout {
        encoder,
        init,
        decoder,
        attention: AttnParams { rounds },
        readout_w: params.add("out.readout.w", zeros(d + k + e, d))?,
        readout_b: params.add("out.readout.b", Tensor::zeros(Shape::vector(d)))?,
        logits_w: params.add("out.logits.w", zeros(d, cfg.trg_vocab))?,
    })
}

/// Inverted Bernoulli dropout on the readout activation.
#[derive(Clone, Debug)]
pub struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {rate}")));
        }
        Ok(Dropout {
            rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    fn mask<T: Real>(&mut self, n: usize) -> Tensor<T> {
        let keep = T::of(1.0 / (1.0 - self.rate));
        let data = (0..n)
            .map(|_| {
                if self.rng.random::<f64>() < self.rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        Tensor::vector(data)
    }
}

/// Per-sentence encoder output inside a graph.
#[derive(Clone, Debug)]
pub struct EncodedInGraph {
    pub annotations: Annotations,
    pub memory: MemoryPair,
    pub init_state: Var,
    /// `annotations·U_a`, cached for the baseline.
    pub projected: Option<Var>,
}

impl EncodedInGraph {
    pub fn eos_slot(&self) -> usize {
        self.annotations.eos_slot()
    }
}

/// Outputs of a teacher-forced pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// One distribution over the target vocabulary per target position.
    pub distributions: Vec<Var>,
    pub steps: Vec<StepResult>,
    pub source: EncodedInGraph,
}

impl Forward {
    /// Final-round attention per target position.
    pub fn attentions(&self) -> impl Iterator<Item = Var> + '_ {
        self.steps.iter().map(|s| s.attention)
    }
}

/// Encoder output detached from any graph, for step-by-step decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSource<T> {
    pub ids: Vec<u32>,
    pub mask: Vec<bool>,
    /// Initial contents of both memories; the value memory for the whole
    /// decode.
    pub annotations: Tensor<T>,
    projected: Option<Tensor<T>>,
}

impl<T: Real> EncodedSource<T> {
    /// Number of real (unpadded) slots, eos included.
    pub fn len(&self) -> usize {
        unpadded_len(&self.mask)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eos_slot(&self) -> usize {
        self.len() - 1
    }
}

/// State threaded between decoding steps: decoder state and key memory.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderCarry<T> {
    pub state: Tensor<T>,
    pub key: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput<T> {
    /// Natural-log probabilities over the target vocabulary.
    pub log_probs: Vec<f64>,
    pub carry: DecoderCarry<T>,
    /// Attention over the real source slots, one vector per round.
    pub attention: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Seq2Seq<T: Real> {
    config: ModelConfig,
    params: ModelParams<T>,
    layout: Layout,
}

impl<T: Real> Seq2Seq<T> {
    /// A model with all parameters zero.
    pub fn zeroed(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ModelParams::new();
        let layout = register(&config, &mut params)?;
        Ok(Seq2Seq { config, params, layout })
    }

    /// A model with parameters drawn from uniform(−0.08, 0.08).
    pub fn initialized(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut m = Self::zeroed(config)?;
        m.params
            .init_uniform(&mut ChaCha8Rng::seed_from_u64(seed), INIT_SCALE);
        Ok(m)
    }

    /// Builds a model from loaded tensors, which must match the layout of
    /// `config` exactly.
    pub fn from_params(config: ModelConfig, loaded: ModelParams<T>) -> Result<Self> {
        let mut m = Self::zeroed(config)?;
        for (name, _) in loaded.iter() {
            if m.params.id(name).is_none() {
                return Err(Error::Checkpoint {
                    name: name.into(),
                    msg: "tensor is not part of this model".into(),
                });
            }
        }
        let names: Vec<_> = m.params.iter().map(|(n, _)| alloc::string::String::from(n)).collect();
        for name in names {
            let t = loaded.by_name(&name).ok_or_else(|| Error::Checkpoint {
                name: name.clone(),
                msg: "tensor missing from checkpoint".into(),
            })?;
            m.params.assign(&name, t)?;
        }
        Ok(m)
    }

    /// Copies every tensor the two models share by name from `pretrained`;
    /// the rest keep their current values.
    pub fn init_from_pretrained(&mut self, pretrained: &ModelParams<T>) -> Result<usize> {
        let mut copied = 0;
        for (name, t) in pretrained.iter() {
            if self.params.id(name).is_some() {
                self.params.assign(name, t)?;
                copied += 1;
            }
        }
        Ok(copied)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut ModelConfig {
        &mut self.config
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn cast<U: Real>(&self) -> Seq2Seq<U> {
        Seq2Seq {
            config: self.config.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
        }
    }

    /// Runs the encoder, sets up both memories and the initial state.
    pub fn encode_in<'p>(&'p self, g: &mut Graph<'p, T>, src_ids: &[u32], mask: &[bool]) -> Result<EncodedInGraph> {
        self.check_ids(src_ids, self.config.src_vocab)?;
        let annotations = encode(g, &self.params, &self.layout.encoder, src_ids, mask)?;
        let init_state = init_decoder_state(g, &self.params, self.layout.init, &annotations)?;
        let memory = init_memories(&annotations);
        let projected = match self.config.variant {
            Variant::Baseline => Some(project_keys(
                g,
                &self.params,
                annotations.matrix,
                &self.layout.attention.rounds[0].query,
            )?),
            Variant::KvMemAtt => None,
        };
        Ok(EncodedInGraph {
            annotations,
            memory,
            init_state,
            projected,
        })
    }

    /// One decoder step for either variant. `mem` carries the current key
    /// memory; the baseline ignores its key.
    pub fn step_in<'p>(
        &'p self,
        g: &mut Graph<'p, T>,
        s_prev: Var,
        y_prev: u32,
        mem: &MemoryPair,
        projected: Option<Var>,
        hook: &UpdateOverride,
    ) -> Result<StepResult> {
        let l = &self.layout;
        match (self.config.variant, projected) {
            (Variant::Baseline, Some(p)) => baseline_step(g, &self.params, &l.decoder, &l.attention, s_prev, y_prev, mem, p),
            (Variant::Baseline, None) => {
                let p = project_keys(g, &self.params, mem.value(), &l.attention.rounds[0].query)?;
                baseline_step(g, &self.params, &l.decoder, &l.attention, s_prev, y_prev, mem, p)
            }
            (Variant::KvMemAtt, _) => kvmematt_step(
                g,
                &self.params,
                &l.decoder,
                &l.attention,
                self.config.rounds,
                s_prev,
                y_prev,
                mem,
                hook,
            ),
        }
    }

    /// `softmax(W_v · dropout(tanh(W_o·[s; c; e(y_prev)] + b_o)))`.
    pub fn predict_distribution<'p>(
        &'p self,
        g: &mut Graph<'p, T>,
        state: Var,
        context: Var,
        y_prev: u32,
        dropout: Option<&mut Dropout>,
    ) -> Result<Var> {
        let logits = self.logits(g, state, context, y_prev, dropout)?;
        g.softmax(logits)
    }

    fn logits<'p>(
        &'p self,
        g: &mut Graph<'p, T>,
        state: Var,
        context: Var,
        y_prev: u32,
        dropout: Option<&mut Dropout>,
    ) -> Result<Var> {
        let l = &self.layout;
        let table = self.params.var(g, l.decoder.embedding);
        let e = g.embed_one(table, y_prev)?;
        let input = g.concat(&[state, context, e])?;
        let w = self.params.var(g, l.readout_w);
        let b = self.params.var(g, l.readout_b);
        let pre = g.matmul(input, w)?;
        let pre = g.add(pre, b)?;
        let mut readout = g.tanh(pre);
        if let Some(d) = dropout {
            if d.rate > 0.0 {
                let m = g.constant(d.mask(self.config.hidden_dim));
                readout = g.mul(readout, m)?;
            }
        }
        let v = self.params.var(g, l.logits_w);
        g.matmul(readout, v)
    }

    /// Teacher-forced pass: one distribution per target token, fed the gold
    /// previous token (bos at the first position). `src_ids` may be padded
    /// as described by `mask`; `trg_ids` is unpadded and ends in eos.
    pub fn forward_teacher_forced<'p>(
        &'p self,
        g: &mut Graph<'p, T>,
        src_ids: &[u32],
        mask: &[bool],
        trg_ids: &[u32],
        hook: &UpdateOverride,
        mut dropout: Option<&mut Dropout>,
    ) -> Result<Forward> {
        if trg_ids.is_empty() {
            return Err(Error::EmptyInput("target sentence"));
        }
        self.check_ids(trg_ids, self.config.trg_vocab)?;
        let source = self.encode_in(g, src_ids, mask)?;
        let mut mem = source.memory.clone();
        let mut s = source.init_state;
        let mut distributions = Vec::with_capacity(trg_ids.len());
        let mut steps = Vec::with_capacity(trg_ids.len());
        let mut y_prev = BOS;
        for &y in trg_ids {
            let step = self.step_in(g, s, y_prev, &mem, source.projected, hook)?;
            let p = self.predict_distribution(g, step.state, step.context, y_prev, dropout.as_deref_mut())?;
            distributions.push(p);
            s = step.state;
            mem = mem.with_key(step.key);
            steps.push(step);
            y_prev = y;
        }
        Ok(Forward {
            distributions,
            steps,
            source,
        })
    }

    fn check_ids(&self, ids: &[u32], size: usize) -> Result<()> {
        match ids.iter().find(|&&id| id as usize >= size) {
            Some(&id) => Err(Error::Vocabulary { id, size }),
            None => Ok(()),
        }
    }

    /// Encodes a (possibly padded) source for step-by-step decoding.
    pub fn encode_source(&self, src_ids: &[u32], mask: &[bool]) -> Result<(EncodedSource<T>, DecoderCarry<T>)> {
        let mut g = Graph::inference();
        let enc = self.encode_in(&mut g, src_ids, mask)?;
        let annotations = g.tensor(enc.annotations.matrix);
        let source = EncodedSource {
            ids: src_ids.to_vec(),
            mask: mask.to_vec(),
            projected: enc.projected.map(|p| g.tensor(p)),
            annotations: annotations.clone(),
        };
        let carry = DecoderCarry {
            state: g.tensor(enc.init_state),
            key: annotations,
        };
        Ok((source, carry))
    }

    /// One inference step from `carry`, leaving `carry` untouched.
    pub fn decode_step(
        &self,
        source: &EncodedSource<T>,
        carry: &DecoderCarry<T>,
        y_prev: u32,
        hook: &UpdateOverride,
    ) -> Result<StepOutput<T>> {
        let mut g = Graph::inference();
        let value = g.constant_ref(&source.annotations);
        let key = g.constant_ref(&carry.key);
        let s = g.constant_ref(&carry.state);
        let projected = source.projected.as_ref().map(|p| g.constant_ref(p));
        let mem = MemoryPair::new(key, value, source.mask.clone());
        let step = self.step_in(&mut g, s, y_prev, &mem, projected, hook)?;
        let logits = self.logits(&mut g, step.state, step.context, y_prev, None)?;
        let len = source.len();
        let attention = step
            .rounds
            .iter()
            .map(|r| g.value(r.attention)[..len].iter().map(|v| v.as_f64()).collect())
            .collect();
        Ok(StepOutput {
            log_probs: log_softmax(g.value(logits)),
            carry: DecoderCarry {
                state: g.tensor(step.state),
                key: g.tensor(step.key),
            },
            attention,
        })
    }
}

impl<T: Real> Parameterized<T> for Seq2Seq<T> {
    fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ModelParams<T> {
        &mut self.params
    }
}

/// `x_i − max − ln Σ exp(x_j − max)`, in f64.
pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<f64> {
    let max = logits
        .iter()
        .map(|v| v.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|v| (v.as_f64() - max).exp_()).sum();
    let lz = z.ln_();
    logits.iter().map(|v| v.as_f64() - max - lz).collect()
}

#[cfg(test)]
mod tests;
