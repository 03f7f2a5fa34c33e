//! Objectives, the optimizer and the training loop.

mod adadelta;
mod objectives;
mod trainer;

pub use adadelta::{AdaDelta, DEFAULT_EPS, DEFAULT_RHO};
pub use objectives::{atteos_penalty, combined_objective, nll_loss, PROB_FLOOR};
pub use trainer::{
    evaluate_loss, greedy_bleu, sentence_loss, train, EpochReport, LossSummary, SentenceLoss, TrainConfig,
};

use crate::attention::UpdateOverride;
use crate::autodiff::{central_difference, grad_check_against, GradCheckReport, Graph};
use crate::model::Seq2Seq;
use crate::params::ModelParams;
use crate::Wide;
use crate::{Real, Result};

/// Copies the tensors a pretrained model shares with `model` by name and
/// shape; tensors it lacks keep their fresh values. Returns the number
/// copied.
pub fn init_from_pretrained<T: Real>(pretrained: &ModelParams<T>, model: &mut Seq2Seq<T>) -> Result<usize> {
    model.init_from_pretrained(pretrained)
}

/// Finite-difference check of the full training loss (dropout off) on one
/// sentence pair.
///
/// The analytic gradient is taken in 64 bits. The central differences are
/// evaluated in double-double arithmetic, so their roundoff (about
/// 1e-32 / ε) stays far below the tolerance even for gradients near 1e-10.
pub fn check_model_gradients(
    model: &Seq2Seq<f64>,
    src: &[u32],
    trg: &[u32],
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let mask = alloc::vec![true; src.len()];
    let mut wide: Seq2Seq<Wide> = model.cast();
    let no_hook = UpdateOverride::default();
    grad_check_against(
        model,
        seed,
        |g, m| Ok(sentence_loss(g, m, src, &mask, trg, &no_hook, None)?.loss),
        |id, c| {
            central_difference(&mut wide, id, c, eps, |m| {
                let mut g = Graph::inference();
                let l = sentence_loss(&mut g, m, src, &mask, trg, &no_hook, None)?.loss;
                Ok(g.scalar(l))
            })
        },
    )
}

#[cfg(test)]
mod tests;
