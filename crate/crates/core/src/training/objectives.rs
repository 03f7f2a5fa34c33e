use alloc::format;

use crate::autodiff::{Graph, Var};
use crate::{Error, Real, Result};

/// Probability floor applied before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// `−Σ_t log p_t(y_t)` over one sentence, with the number of gold
/// probabilities that fell below the floor.
pub fn nll_loss<T: Real>(g: &mut Graph<'_, T>, distributions: &[Var], trg_ids: &[u32]) -> Result<(Var, usize)> {
    if distributions.len() != trg_ids.len() {
        return Err(Error::Contract(format!(
            "{} distributions for {} target tokens",
            distributions.len(),
            trg_ids.len()
        )));
    }
    if trg_ids.is_empty() {
        return Err(Error::EmptyInput("target sentence"));
    }
    let floor = T::of(PROB_FLOOR);
    let mut clamped = 0;
    let mut total: Option<Var> = None;
    for (&p, &y) in distributions.iter().zip(trg_ids) {
        let gold = g.pick(p, y as usize)?;
        if g.scalar(gold) < floor {
            clamped += 1;
        }
        let lp = g.log_clamped(gold, floor);
        total = Some(match total {
            None => lp,
            Some(t) => g.add(t, lp)?,
        });
    }
    let total = total.expect("at least one target token");
    Ok((g.affine(total, -T::one(), T::zero()), clamped))
}

/// `Σ_{t<m} a_t[eos] + (1 − a_m[eos])`: attention on the source eos slot
/// should be absent before the last target step and complete at it.
pub fn atteos_penalty<T: Real>(g: &mut Graph<'_, T>, attentions: &[Var], eos_slot: usize) -> Result<Var> {
    let (last, early) = attentions
        .split_last()
        .ok_or(Error::EmptyInput("attention rows"))?;
    let final_mass = g.pick(*last, eos_slot)?;
    let mut total = g.affine(final_mass, -T::one(), T::one());
    for &a in early {
        let m = g.pick(a, eos_slot)?;
        total = g.add(total, m)?;
    }
    Ok(total)
}

/// `nll + λ·penalty`.
pub fn combined_objective<T: Real>(g: &mut Graph<'_, T>, nll: Var, penalty: Var, lambda: f64) -> Result<Var> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be non-negative, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(nll);
    }
    let weighted = g.affine(penalty, T::of(lambda), T::zero());
    g.add(nll, weighted)
}
