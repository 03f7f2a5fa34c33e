use alloc::format;
use alloc::vec::Vec;

use crate::attention::UpdateOverride;
use crate::autodiff::{Graph, Var};
use crate::data::vocab::EOS;
use crate::data::{make_batches, EncodedPair};
use crate::decode::greedy_decode;
use crate::eval::{bleu, Smoothing};
use crate::model::{Dropout, Seq2Seq};
use crate::params::Gradients;
use crate::rnn::unpadded_len;
use crate::{Error, Real, Result};

use super::adadelta::{AdaDelta, DEFAULT_EPS, DEFAULT_RHO};
use super::objectives::{atteos_penalty, combined_objective, nll_loss};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    /// Pairs with more tokens than this on either side are skipped.
    pub max_len: usize,
    pub epochs: usize,
    pub seed: u64,
    pub rho: f64,
    pub eps: f64,
    /// Rescale gradients whose global L2 norm exceeds this.
    pub clip_norm: Option<f64>,
    /// Validate every this many epochs; 0 disables validation.
    pub validate_every: usize,
    /// Flag a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_len: 50,
            epochs: 10,
            seed: 1,
            rho: DEFAULT_RHO,
            eps: DEFAULT_EPS,
            clip_norm: None,
            validate_every: 1,
            checkpoint_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.max_len < 1 {
            return Err(Error::Config("max sentence length must be at least 1".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Config(format!("clip norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// Loss terms of one sentence inside a graph.
#[derive(Clone, Copy, Debug)]
pub struct SentenceLoss {
    pub loss: Var,
    pub nll: Var,
    pub penalty: Var,
    pub clamped: usize,
}

/// Teacher-forced `nll + λ·penalty` for one pair. The source may be padded
/// as described by `src_mask`; `trg` is unpadded and ends in eos.
pub fn sentence_loss<'p, T: Real>(
    g: &mut Graph<'p, T>,
    model: &'p Seq2Seq<T>,
    src: &[u32],
    src_mask: &[bool],
    trg: &[u32],
    hook: &UpdateOverride,
    dropout: Option<&mut Dropout>,
) -> Result<SentenceLoss> {
    let fwd = model.forward_teacher_forced(g, src, src_mask, trg, hook, dropout)?;
    let (nll, clamped) = nll_loss(g, &fwd.distributions, trg)?;
    let attn: Vec<Var> = fwd.attentions().collect();
    let penalty = atteos_penalty(g, &attn, fwd.source.eos_slot())?;
    let loss = combined_objective(g, nll, penalty, model.config().lambda)?;
    Ok(SentenceLoss {
        loss,
        nll,
        penalty,
        clamped,
    })
}

/// Per-sentence means over a set of pairs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossSummary {
    pub loss: f64,
    pub nll: f64,
    pub penalty: f64,
    pub sentences: usize,
}

impl LossSummary {
    fn add(&mut self, g: &Graph<'_, impl Real>, s: &SentenceLoss) {
        self.loss += g.scalar(s.loss).as_f64();
        self.nll += g.scalar(s.nll).as_f64();
        self.penalty += g.scalar(s.penalty).as_f64();
        self.sentences += 1;
    }

    fn finish(mut self) -> Self {
        if self.sentences > 0 {
            let n = self.sentences as f64;
            self.loss /= n;
            self.nll /= n;
            self.penalty /= n;
        }
        self
    }
}

/// Mean teacher-forced loss without dropout.
pub fn evaluate_loss<T: Real>(model: &Seq2Seq<T>, pairs: &[EncodedPair]) -> Result<LossSummary> {
    let mut sum = LossSummary::default();
    for p in pairs {
        let mut g = Graph::inference();
        let s = sentence_loss(&mut g, model, &p.src, &vec_true(p.src.len()), &p.trg, &UpdateOverride::default(), None)?;
        sum.add(&g, &s);
    }
    Ok(sum.finish())
}

fn vec_true(n: usize) -> Vec<bool> {
    alloc::vec![true; n]
}

fn strip_eos(ids: &[u32]) -> Vec<u32> {
    ids.iter().copied().take_while(|&t| t != EOS).collect()
}

/// Corpus BLEU of greedy outputs against the references.
pub fn greedy_bleu<T: Real>(model: &Seq2Seq<T>, pairs: &[EncodedPair]) -> Result<f64> {
    let mut hyps = Vec::with_capacity(pairs.len());
    let mut refs = Vec::with_capacity(pairs.len());
    for p in pairs {
        let h = greedy_decode(model, &p.src, model.config().max_decode_len)?;
        hyps.push(strip_eos(&h.tokens));
        refs.push(strip_eos(&p.trg));
    }
    bleu(&hyps, &refs, 4, Smoothing::None)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub train: LossSummary,
    pub valid: Option<LossSummary>,
    pub valid_bleu: Option<f64>,
    /// Batches whose update was skipped for non-finite gradients.
    pub skipped_batches: usize,
    /// Gold probabilities clamped at the floor.
    pub clamped: usize,
    pub dropped_pairs: usize,
    pub checkpoint_due: bool,
}

/// Runs one gradient step on a batch and returns the summed loss terms.
fn train_batch<T: Real>(
    model: &mut Seq2Seq<T>,
    opt: &mut AdaDelta<T>,
    batch: &crate::data::Batch,
    dropout: &mut Dropout,
    clip_norm: Option<f64>,
) -> Result<(LossSummary, usize, bool)> {
    let mut sum = LossSummary::default();
    let mut clamped = 0;
    let mut grads = Gradients::zeros_like(model.params());
    {
        let mut g = Graph::new();
        let mut total: Option<Var> = None;
        for (i, trg_row) in batch.trg.iter().enumerate() {
            let trg = &trg_row[..unpadded_len(&batch.trg_mask[i])];
            let s = sentence_loss(
                &mut g,
                model,
                &batch.src[i],
                &batch.src_mask[i],
                trg,
                &UpdateOverride::default(),
                Some(dropout),
            )?;
            sum.add(&g, &s);
            clamped += s.clamped;
            total = Some(match total {
                None => s.loss,
                Some(t) => g.add(t, s.loss)?,
            });
        }
        let total = total.ok_or(Error::EmptyInput("batch"))?;
        let mean = g.affine(total, T::of(1.0 / batch.len() as f64), T::zero());
        g.backward(mean)?;
        grads.accumulate(&g);
    }
    if let Some(c) = clip_norm {
        let norm = grads.l2_norm();
        if norm > c {
            grads.scale(T::of(c / norm));
        }
    }
    let applied = opt.step(model.params_mut(), &grads)?;
    Ok((sum, clamped, applied))
}

/// Epoch loop: shuffled length-bucketed batches, teacher-forced combined
/// loss, backpropagation and one AdaDelta step per batch. `on_epoch` sees
/// each report and the current model, e.g. to log or save it.
pub fn train<T, F>(
    model: &mut Seq2Seq<T>,
    train_pairs: &[EncodedPair],
    valid_pairs: &[EncodedPair],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<EpochReport>>
where
    T: Real,
    F: FnMut(&EpochReport, &Seq2Seq<T>) -> Result<()>,
{
    cfg.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::EmptyInput("training corpus"));
    }
    let mut opt = AdaDelta::new(model.params(), cfg.rho, cfg.eps)?;
    let mut dropout = Dropout::new(model.config().dropout, cfg.seed ^ 0x5eed_d40f)?;
    let mut reports = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let batches = make_batches(train_pairs, cfg.batch_size, cfg.max_len, cfg.seed.wrapping_add(epoch as u64))?;
        if batches.batches.is_empty() {
            return Err(Error::EmptyInput("no training pair within the length limit"));
        }
        let mut sum = LossSummary::default();
        let mut clamped = 0;
        let mut skipped = 0;
        for batch in &batches.batches {
            let (s, c, applied) = train_batch(model, &mut opt, batch, &mut dropout, cfg.clip_norm)?;
            sum.loss += s.loss;
            sum.nll += s.nll;
            sum.penalty += s.penalty;
            sum.sentences += s.sentences;
            clamped += c;
            skipped += usize::from(!applied);
        }
        let validate = cfg.validate_every > 0 && epoch % cfg.validate_every == 0 && !valid_pairs.is_empty();
        let (valid, valid_bleu) = if validate {
            (Some(evaluate_loss(model, valid_pairs)?), Some(greedy_bleu(model, valid_pairs)?))
        } else {
            (None, None)
        };
        let report = EpochReport {
            epoch,
            train: sum.finish(),
            valid,
            valid_bleu,
            skipped_batches: skipped,
            clamped,
            dropped_pairs: batches.dropped,
            checkpoint_due: cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0,
        };
        if !report.train.loss.is_finite() {
            return Err(Error::Numeric(format!("training loss is not finite in epoch {epoch}")));
        }
        on_epoch(&report, model)?;
        reports.push(report);
    }
    Ok(reports)
}
