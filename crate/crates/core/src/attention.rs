//! Key-value memory-augmented attention.
//!
//! Both memories start as copies of the source annotations. The value
//! memory is only ever read. The key memory is rewritten after every round
//! of every decoding step by a Forget phase (bounded multiplicative erasure)
//! followed by an Add phase (bounded additive write), both spread over the
//! slots by an addressing distribution.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::params::{ModelParams, ParamId};
use crate::rnn::{gru_cell, Annotations, GruParams};
use crate::tensor::{Shape, Tensor};
use crate::{Error, Real, Result};

/// Weights of one additive scorer `v_aᵀ tanh(probe·W_a + key_j·U_a)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AddressingParams {
    /// `[probe × attn]`
    pub w_a: ParamId,
    /// `[key × attn]`
    pub u_a: ParamId,
    /// `[attn]`
    pub v_a: ParamId,
}

impl AddressingParams {
    pub fn register<T: Real>(
        params: &mut ModelParams<T>,
        prefix: &str,
        probe_dim: usize,
        key_dim: usize,
        attn_dim: usize,
    ) -> Result<Self> {
        Ok(AddressingParams {
            w_a: params.add(&format!("{prefix}.w_a"), Tensor::zeros(Shape::matrix(probe_dim, attn_dim)))?,
            u_a: params.add(&format!("{prefix}.u_a"), Tensor::zeros(Shape::matrix(key_dim, attn_dim)))?,
            v_a: params.add(&format!("{prefix}.v_a"), Tensor::zeros(Shape::vector(attn_dim)))?,
        })
    }
}

/// Forget/Add projections of one round, mapping the decoder state to the
/// key dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpdateParams {
    /// Addressing used to spread the update over the slots.
    pub addressing: AddressingParams,
    /// `[state × key]`
    pub forget: ParamId,
    /// `[state × key]`
    pub add: ParamId,
    pub forget_bias: Option<ParamId>,
    pub add_bias: Option<ParamId>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoundParams {
    pub query: AddressingParams,
    /// Absent for the plain attention baseline.
    pub update: Option<UpdateParams>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttnParams {
    pub rounds: Vec<RoundParams>,
}

/// Test hook pinning the Forget and/or Add vectors to a constant, e.g.
/// `F = A = 0` for the identity update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateOverride {
    pub forget: Option<f64>,
    pub add: Option<f64>,
}

impl UpdateOverride {
    pub const FROZEN: UpdateOverride = UpdateOverride {
        forget: Some(0.0),
        add: Some(0.0),
    };
}

/// The key/value memory pair of one source sentence inside a graph.
///
/// The value memory is fixed at construction; only the key memory can be
/// replaced.
#[derive(Clone, Debug)]
pub struct MemoryPair {
    key: Var,
    value: Var,
    mask: Vec<bool>,
}

impl MemoryPair {
    pub fn new(key: Var, value: Var, mask: Vec<bool>) -> Self {
        MemoryPair { key, value, mask }
    }

    pub fn key(&self) -> Var {
        self.key
    }

    pub fn value(&self) -> Var {
        self.value
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn slots(&self) -> usize {
        self.mask.len()
    }

    pub fn with_key(&self, key: Var) -> MemoryPair {
        MemoryPair {
            key,
            value: self.value,
            mask: self.mask.clone(),
        }
    }
}

/// Both memories start as the annotations.
pub fn init_memories(ann: &Annotations) -> MemoryPair {
    MemoryPair::new(ann.matrix, ann.matrix, ann.mask.clone())
}

/// `key·U_a`, the probe-independent half of the scores.
pub fn project_keys<'p, T: Real>(
    g: &mut Graph<'p, T>,
    params: &'p ModelParams<T>,
    key: Var,
    w: &AddressingParams,
) -> Result<Var> {
    let u = params.var(g, w.u_a);
    g.matmul(key, u)
}

/// Addressing with the key projection already computed.
pub fn address_projected<'p, T: Real>(
    g: &mut Graph<'p, T>,
    params: &'p ModelParams<T>,
    probe: Var,
    projected: Var,
    w: &AddressingParams,
    mask: &[bool],
) -> Result<Var> {
    let wa = params.var(g, w.w_a);
    let va = params.var(g, w.v_a);
    let pw = g.matmul(probe, wa)?;
    let pre = g.add(projected, pw)?;
    let act = g.tanh(pre);
    let scores = g.matmul(act, va)?;
    g.softmax_masked(scores, mask)
}

/// Normalized weights over the slots:
/// `softmax_j(v_aᵀ tanh(probe·W_a + key_j·U_a))`, restricted to `mask`.
pub fn address<'p, T: Real>(
    g: &mut Graph<'p, T>,
    params: &'p ModelParams<T>,
    probe: Var,
    key: Var,
    w: &AddressingParams,
    mask: &[bool],
) -> Result<Var> {
    let projected = project_keys(g, params, key, w)?;
    address_projected(g, params, probe, projected, w, mask)
}

/// Convex combination of the value rows.
pub fn read<T: Real>(g: &mut Graph<'_, T>, attn: Var, value: Var) -> Result<Var> {
    g.matmul(attn, value)
}

/// Intermediate values of one key update.
#[derive(Clone, Copy, Debug)]
pub struct KeyUpdate {
    pub key: Var,
    pub weights: Var,
    pub forget: Var,
    pub add: Var,
    /// Key memory after the Forget phase, before the Add phase.
    pub erased: Var,
}

/// `k̃_i = k_i ⊙ (1 − w_i·F)` then `k'_i = k̃_i + w_i·A`, for every slot.
pub fn forget_add<T: Real>(g: &mut Graph<'_, T>, key: Var, weights: Var, forget: Var, add: Var) -> Result<(Var, Var)> {
    let (n, dk) = (g.shape(key).rows(), g.shape(key).cols());
    let w = g.reshape(weights, Shape::matrix(n, 1))?;
    let f = g.reshape(forget, Shape::matrix(1, dk))?;
    let a = g.reshape(add, Shape::matrix(1, dk))?;
    let wf = g.matmul(w, f)?;
    let keep = g.affine(wf, -T::one(), T::one());
    let erased = g.mul(key, keep)?;
    let wa = g.matmul(w, a)?;
    let written = g.add(erased, wa)?;
    Ok((erased, written))
}

fn gate<'p, T: Real>(
    g: &mut Graph<'p, T>,
    params: &'p ModelParams<T>,
    state: Var,
    weight: ParamId,
    bias: Option<ParamId>,
    pinned: Option<f64>,
) -> Result<Var> {
    let w = params.var(g, weight);
    if let Some(v) = pinned {
        let dk = g.shape(w).cols();
        return Ok(g.constant(Tensor::full(Shape::vector(dk), T::of(v))));
    }
    let mut pre = g.matmul(state, w)?;
    if let Some(b) = bias {
        let b = params.var(g, b);
        pre = g.add(pre, b)?;
    }
    Ok(g.sigmoid(pre))
}

/// Rewrites the key memory from the intermediate state `state`.
pub fn update_key<'p, T: Real>(
    g: &mut Graph<'p, T>,
    params: &'p ModelParams<T>,
    state: Var,
    key: Var,
    p: &UpdateParams,
    mask: &[bool],
    hook: &UpdateOverride,
) -> Result<KeyUpdate> {
    let weights = address(g, params, state, key, &p.addressing, mask)?;
    let forget = gate(g, params, state, p.forget, p.forget_bias, hook.forget)?;
    let add = gate(g, params, state, p.add, p.add_bias, hook.add)?;
    let (erased, key) = forget_add(g, key, weights, forget, add)?;
    Ok(KeyUpdate {
        key,
        weights,
        forget,
        add,
        erased,
    })
}

/// Query GRU, state GRU and target embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecoderParams {
    pub embedding: ParamId,
    pub query_gru: GruParams,
    pub state_gru: GruParams,
}

#[derive(Clone, Copy, Debug)]
pub struct RoundTrace {
    pub attention: Var,
    pub context: Var,
    pub state: Var,
    /// Key memory after this round's update.
    pub key: Var,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub state: Var,
    pub context: Var,
    pub attention: Var,
    pub key: Var,
    pub query: Var,
    pub rounds: Vec<RoundTrace>,
}

fn query_state<'p, T: Real>(
    g: &mut Graph<'p, T>,
    params: &'p ModelParams<T>,
    dec: &DecoderParams,
    s_prev: Var,
    y_prev: u32,
) -> Result<Var> {
    let table = params.var(g, dec.embedding);
    let e = g.embed_one(table, y_prev)?;
    gru_cell(g, params, &dec.query_gru, e, s_prev)
}

/// One decoding step with `rounds` passes of Address → Read → Update.
///
/// `q = GRU(s_prev, e(y_prev))`; for each round `ã = Address(q, K)`,
/// `c̃ = Read(ã, V)`, `s̃ = GRU(q, c̃)`, `K ← Update(s̃, K)`. The last round's
/// `(s̃, c̃, ã)` are the step outputs and the final key memory is carried
/// to the next step.
#[allow(clippy::too_many_arguments)]
pub fn kvmematt_step<'p, T: Real>(
    g: &mut Graph<'p, T>,
    params: &'p ModelParams<T>,
    dec: &DecoderParams,
    attn: &AttnParams,
    rounds: usize,
    s_prev: Var,
    y_prev: u32,
    mem: &MemoryPair,
    hook: &UpdateOverride,
) -> Result<StepResult> {
    if rounds < 1 {
        return Err(Error::Config("the number of memory rounds must be at least 1".into()));
    }
    if attn.rounds.len() < rounds {
        return Err(Error::Config(format!(
            "{rounds} rounds requested but only {} are parameterized",
            attn.rounds.len()
        )));
    }
    let q = query_state(g, params, dec, s_prev, y_prev)?;
    let mut key = mem.key();
    let mut trace = Vec::with_capacity(rounds);
    for round in &attn.rounds[..rounds] {
        let update = round
            .update
            .as_ref()
            .ok_or_else(|| Error::Config("round has no key-update parameters".into()))?;
        let a = address(g, params, q, key, &round.query, mem.mask())?;
        let c = read(g, a, mem.value())?;
        let s = gru_cell(g, params, &dec.state_gru, c, q)?;
        key = update_key(g, params, s, key, update, mem.mask(), hook)?.key;
        trace.push(RoundTrace {
            attention: a,
            context: c,
            state: s,
            key,
        });
    }
    let last = trace[rounds - 1];
    Ok(StepResult {
        state: last.state,
        context: last.context,
        attention: last.attention,
        key,
        query: q,
        rounds: trace,
    })
}

/// Plain additive attention over the annotations.
pub fn baseline_attention<'p, T: Real>(
    g: &mut Graph<'p, T>,
    params: &'p ModelParams<T>,
    probe: Var,
    ann: Var,
    w: &AddressingParams,
    mask: &[bool],
) -> Result<(Var, Var)> {
    let a = address(g, params, probe, ann, w, mask)?;
    let c = read(g, a, ann)?;
    Ok((a, c))
}

/// Baseline decoding step with the same two-GRU structure as
/// [`kvmematt_step`] but attention over the fixed annotations. `projected`
/// is `annotations·U_a`, shared by every step of a sentence.
#[allow(clippy::too_many_arguments)]
pub fn baseline_step<'p, T: Real>(
    g: &mut Graph<'p, T>,
    params: &'p ModelParams<T>,
    dec: &DecoderParams,
    attn: &AttnParams,
    s_prev: Var,
    y_prev: u32,
    mem: &MemoryPair,
    projected: Var,
) -> Result<StepResult> {
    let w = &attn
        .rounds
        .first()
        .ok_or_else(|| Error::Config("attention has no addressing parameters".into()))?
        .query;
    let q = query_state(g, params, dec, s_prev, y_prev)?;
    let a = address_projected(g, params, q, projected, w, mem.mask())?;
    let c = read(g, a, mem.value())?;
    let s = gru_cell(g, params, &dec.state_gru, c, q)?;
    Ok(StepResult {
        state: s,
        context: c,
        attention: a,
        key: mem.key(),
        query: q,
        rounds: alloc::vec![RoundTrace {
            attention: a,
            context: c,
            state: s,
            key: mem.key(),
        }],
    })
}
