//! GRU cell and the bidirectional encoder.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::data::vocab::EOS;
use crate::params::{ModelParams, ParamId};
use crate::tensor::{Shape, Tensor};
use crate::{Error, Real, Result};

/// Gate weights of one GRU. Input weights are `[input × hidden]`, recurrent
/// weights `[hidden × hidden]`, biases `[hidden]`; inputs are row vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruParams {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruParams {
    /// Adds zero-initialized gate tensors named `{prefix}.w_z` etc.
    pub fn register<T: Real>(
        params: &mut ModelParams<T>,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
    ) -> Result<Self> {
        let mut add = |name: &str, shape: Shape| params.add(&format!("{prefix}.{name}"), Tensor::zeros(shape));
        let w = Shape::matrix(input_dim, hidden_dim);
        let u = Shape::matrix(hidden_dim, hidden_dim);
        let b = Shape::vector(hidden_dim);
        Ok(GruParams {
            w_z: add("w_z", w)?,
            w_r: add("w_r", w)?,
            w_h: add("w_h", w)?,
            u_z: add("u_z", u)?,
            u_r: add("u_r", u)?,
            u_h: add("u_h", u)?,
            b_z: add("b_z", b)?,
            b_r: add("b_r", b)?,
            b_h: add("b_h", b)?,
            input_dim,
            hidden_dim,
        })
    }
}

/// One GRU step:
///
/// ```text
/// z  = σ(x·W_z + h·U_z + b_z)
/// r  = σ(x·W_r + h·U_r + b_r)
/// h̃  = tanh(x·W_h + (r ⊙ h)·U_h + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ h̃
/// ```
pub fn gru_cell<'p, T: Real>(
    g: &mut Graph<'p, T>,
    params: &'p ModelParams<T>,
    p: &GruParams,
    x: Var,
    h: Var,
) -> Result<Var> {
    let (sx, sh) = (g.shape(x), g.shape(h));
    if sx != Shape::vector(p.input_dim) || sh != Shape::vector(p.hidden_dim) {
        return Err(Error::Dimension {
            op: "gru_cell",
            left: sx,
            right: sh,
        });
    }
    let gate = |g: &mut Graph<'p, T>, w: ParamId, u: ParamId, b: ParamId, hh: Var| -> Result<Var> {
        let (w, u, b) = (params.var(g, w), params.var(g, u), params.var(g, b));
        let xw = g.matmul(x, w)?;
        let hu = g.matmul(hh, u)?;
        let s = g.add(xw, hu)?;
        g.add(s, b)
    };
    let z_pre = gate(g, p.w_z, p.u_z, p.b_z, h)?;
    let z = g.sigmoid(z_pre);
    let r_pre = gate(g, p.w_r, p.u_r, p.b_r, h)?;
    let r = g.sigmoid(r_pre);
    let rh = g.mul(r, h)?;
    let c_pre = gate(g, p.w_h, p.u_h, p.b_h, rh)?;
    let cand = g.tanh(c_pre);
    let keep = g.affine(z, -T::one(), T::one());
    let carried = g.mul(keep, h)?;
    let written = g.mul(z, cand)?;
    g.add(carried, written)
}

/// Encoder parameters: source embeddings and one GRU per direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderParams {
    pub embedding: ParamId,
    pub forward: GruParams,
    pub backward: GruParams,
}

/// Encoder output for one source sentence.
///
/// `matrix` is `[slots × 2d]`; row `j < len` is `[forward_j ; backward_j]`
/// and rows past `len` are zero padding.
#[derive(Clone, Debug)]
pub struct Annotations {
    pub matrix: Var,
    pub forward: Vec<Var>,
    pub backward: Vec<Var>,
    /// Real positions, eos included.
    pub len: usize,
    /// `len` true entries followed by false for padding.
    pub mask: Vec<bool>,
}

impl Annotations {
    pub fn slots(&self) -> usize {
        self.mask.len()
    }

    /// Slot of the source end-of-sentence token.
    pub fn eos_slot(&self) -> usize {
        self.len - 1
    }
}

/// Real length of a right-padded id sequence.
pub fn unpadded_len(mask: &[bool]) -> usize {
    mask.iter().take_while(|&&m| m).count()
}

/// Runs the bidirectional scan. `src_ids` may be right-padded; `mask` marks
/// the real tokens, which must end with eos. Padding rows are zero.
pub fn encode<'p, T: Real>(
    g: &mut Graph<'p, T>,
    params: &'p ModelParams<T>,
    p: &EncoderParams,
    src_ids: &[u32],
    mask: &[bool],
) -> Result<Annotations> {
    if src_ids.is_empty() {
        return Err(Error::EmptyInput("source sentence"));
    }
    if mask.len() != src_ids.len() {
        return Err(Error::Contract(format!(
            "source mask has {} entries for {} ids",
            mask.len(),
            src_ids.len()
        )));
    }
    let len = unpadded_len(mask);
    if len == 0 {
        return Err(Error::EmptyInput("source sentence"));
    }
    if mask[len..].iter().any(|&m| m) {
        return Err(Error::Contract("source mask must be a prefix of trues".into()));
    }
    if src_ids[len - 1] != EOS {
        return Err(Error::Contract("source sentence must end with eos".into()));
    }
    let d = p.forward.hidden_dim;
    let table = params.var(g, p.embedding);
    let embedded: Vec<Var> = src_ids[..len]
        .iter()
        .map(|&id| g.embed_one(table, id))
        .collect::<Result<_>>()?;

    let zero = g.constant(Tensor::zeros(Shape::vector(d)));
    let mut forward = Vec::with_capacity(len);
    let mut h = zero;
    for &x in &embedded {
        h = gru_cell(g, params, &p.forward, x, h)?;
        forward.push(h);
    }
    let mut backward = vec![zero; len];
    let mut h = zero;
    for j in (0..len).rev() {
        h = gru_cell(g, params, &p.backward, embedded[j], h)?;
        backward[j] = h;
    }

    let mut rows = Vec::with_capacity(src_ids.len());
    for j in 0..len {
        rows.push(g.concat(&[forward[j], backward[j]])?);
    }
    if src_ids.len() > len {
        let pad = g.constant(Tensor::zeros(Shape::vector(2 * d)));
        rows.resize(src_ids.len(), pad);
    }
    let matrix = g.stack(&rows)?;
    Ok(Annotations {
        matrix,
        forward,
        backward,
        len,
        mask: mask.to_vec(),
    })
}

/// `s₀ = tanh(backward₀ · W_init)`.
pub fn init_decoder_state<'p, T: Real>(
    g: &mut Graph<'p, T>,
    params: &'p ModelParams<T>,
    w_init: ParamId,
    ann: &Annotations,
) -> Result<Var> {
    let first = *ann
        .backward
        .first()
        .ok_or(Error::EmptyInput("annotations"))?;
    let w = params.var(g, w_init);
    let pre = g.matmul(first, w)?;
    Ok(g.tanh(pre))
}
