//! Greedy and beam search over a trained model.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::attention::UpdateOverride;
use crate::data::vocab::{BOS, EOS};
use crate::eval::AttentionTrace;
use crate::model::{DecoderCarry, EncodedSource, Seq2Seq};
use crate::rnn::unpadded_len;
use crate::{Error, Real, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Output ids, ending in eos unless truncated at the length limit.
    pub tokens: Vec<u32>,
    /// Sum of the log-probabilities of the chosen tokens.
    pub log_prob: f64,
    pub trace: AttentionTrace,
}

impl Hypothesis {
    pub fn is_finished(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }

    /// Ranking score: the log-probability, divided by the length when
    /// `length_norm` is set.
    pub fn score(&self, length_norm: bool) -> f64 {
        if length_norm && !self.tokens.is_empty() {
            self.log_prob / self.tokens.len() as f64
        } else {
            self.log_prob
        }
    }
}

/// Higher score first, then lexicographically smaller ids.
fn rank(a: &Hypothesis, b: &Hypothesis, length_norm: bool) -> Ordering {
    b.score(length_norm)
        .partial_cmp(&a.score(length_norm))
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

fn check_len(max_len: usize) -> Result<()> {
    if max_len == 0 {
        Err(Error::Config("max decode length must be at least 1".into()))
    } else {
        Ok(())
    }
}

fn real_source(src_ids: &[u32], mask: &[bool]) -> Vec<u32> {
    src_ids[..unpadded_len(mask)].to_vec()
}

/// Index of the largest entry, smallest index on ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Takes the most probable token at every step until eos or `max_len`.
pub fn greedy_decode<T: Real>(model: &Seq2Seq<T>, src_ids: &[u32], max_len: usize) -> Result<Hypothesis> {
    greedy_decode_masked(model, src_ids, &vec![true; src_ids.len()], max_len)
}

/// [`greedy_decode`] on a right-padded source.
pub fn greedy_decode_masked<T: Real>(
    model: &Seq2Seq<T>,
    src_ids: &[u32],
    mask: &[bool],
    max_len: usize,
) -> Result<Hypothesis> {
    check_len(max_len)?;
    let (source, mut carry) = model.encode_source(src_ids, mask)?;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        trace: AttentionTrace::new(real_source(src_ids, mask)),
    };
    let mut y_prev = BOS;
    while hyp.tokens.len() < max_len {
        let out = model.decode_step(&source, &carry, y_prev, &UpdateOverride::default())?;
        let y = argmax(&out.log_probs) as u32;
        hyp.tokens.push(y);
        hyp.log_prob += out.log_probs[y as usize];
        hyp.trace.push(y, out.attention);
        if y == EOS {
            break;
        }
        carry = out.carry;
        y_prev = y;
    }
    Ok(hyp)
}

/// Greedy decoding of every row of a padded batch.
pub fn greedy_decode_batch<T: Real>(
    model: &Seq2Seq<T>,
    src: &[Vec<u32>],
    mask: &[Vec<bool>],
    max_len: usize,
) -> Result<Vec<Hypothesis>> {
    src.iter()
        .zip(mask)
        .map(|(ids, m)| greedy_decode_masked(model, ids, m, max_len))
        .collect()
}

/// Scores a given target by feeding it token by token, recording the
/// attention of every step. Used to extract alignments for gold targets.
pub fn forced_decode<T: Real>(model: &Seq2Seq<T>, src_ids: &[u32], trg_ids: &[u32]) -> Result<Hypothesis> {
    let (source, mut carry) = model.encode_source(src_ids, &vec![true; src_ids.len()])?;
    let mut hyp = Hypothesis {
        tokens: Vec::with_capacity(trg_ids.len()),
        log_prob: 0.0,
        trace: AttentionTrace::new(src_ids.to_vec()),
    };
    let mut y_prev = BOS;
    for &y in trg_ids {
        let out = model.decode_step(&source, &carry, y_prev, &UpdateOverride::default())?;
        let lp = out
            .log_probs
            .get(y as usize)
            .copied()
            .ok_or(Error::Vocabulary {
                id: y,
                size: out.log_probs.len(),
            })?;
        hyp.tokens.push(y);
        hyp.log_prob += lp;
        hyp.trace.push(y, out.attention);
        carry = out.carry;
        y_prev = y;
    }
    Ok(hyp)
}

struct Live<T> {
    hyp: Hypothesis,
    carry: DecoderCarry<T>,
}

/// Beam search returning every collected hypothesis, best first.
///
/// At each step the `beam` best one-token extensions of the live
/// hypotheses survive; those ending in eos are set aside as finished. Each
/// survivor owns a copy of its parent's key memory. Search ends when
/// `beam` hypotheses have finished, none are live, the length limit is
/// reached (live ones are then kept as truncated), or, without length
/// normalization, no live hypothesis can still beat the best finished one.
pub fn beam_decode<T: Real>(
    model: &Seq2Seq<T>,
    src_ids: &[u32],
    beam: usize,
    max_len: usize,
    length_norm: bool,
) -> Result<Vec<Hypothesis>> {
    beam_decode_masked(model, src_ids, &vec![true; src_ids.len()], beam, max_len, length_norm)
}

pub fn beam_decode_masked<T: Real>(
    model: &Seq2Seq<T>,
    src_ids: &[u32],
    mask: &[bool],
    beam: usize,
    max_len: usize,
    length_norm: bool,
) -> Result<Vec<Hypothesis>> {
    if beam == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    check_len(max_len)?;
    let (source, carry) = model.encode_source(src_ids, mask)?;
    let mut live = vec![Live {
        hyp: Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            trace: AttentionTrace::new(real_source(src_ids, mask)),
        },
        carry,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        live = expand(model, &source, &live, beam)?;
        let (done, rest): (Vec<_>, Vec<_>) = live.into_iter().partition(|l| l.hyp.is_finished());
        finished.extend(done.into_iter().map(|l| l.hyp));
        live = rest;
        if live.is_empty() || finished.len() >= beam {
            break;
        }
        if !length_norm {
            let best_done = finished.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
            let best_live = live.iter().map(|l| l.hyp.log_prob).fold(f64::NEG_INFINITY, f64::max);
            // Extensions only lower the log-probability.
            if best_done >= best_live {
                live.clear();
                break;
            }
        }
    }
    finished.extend(live.into_iter().map(|l| l.hyp));
    finished.sort_by(|a, b| rank(a, b, length_norm));
    Ok(finished)
}

fn expand<T: Real>(
    model: &Seq2Seq<T>,
    source: &EncodedSource<T>,
    live: &[Live<T>],
    beam: usize,
) -> Result<Vec<Live<T>>> {
    struct Candidate {
        parent: usize,
        token: u32,
        log_prob: f64,
    }
    let mut outputs = Vec::with_capacity(live.len());
    let mut candidates = Vec::new();
    for (i, l) in live.iter().enumerate() {
        let y_prev = l.hyp.tokens.last().copied().unwrap_or(BOS);
        let out = model.decode_step(source, &l.carry, y_prev, &UpdateOverride::default())?;
        for (v, &lp) in out.log_probs.iter().enumerate() {
            candidates.push(Candidate {
                parent: i,
                token: v as u32,
                log_prob: l.hyp.log_prob + lp,
            });
        }
        outputs.push(out);
    }
    // Raw log-probabilities decide which prefixes survive; ties go to the
    // lexicographically smaller sequence.
    candidates.sort_by(|a, b| {
        b.log_prob
            .partial_cmp(&a.log_prob)
            .unwrap_or(Ordering::Equal)
            .then_with(|| live[a.parent].hyp.tokens.cmp(&live[b.parent].hyp.tokens))
            .then(a.token.cmp(&b.token))
    });
    candidates.truncate(beam);
    Ok(candidates
        .into_iter()
        .map(|c| {
            let out = &outputs[c.parent];
            let mut hyp = live[c.parent].hyp.clone();
            hyp.tokens.push(c.token);
            hyp.log_prob = c.log_prob;
            hyp.trace.push(c.token, out.attention.clone());
            Live {
                hyp,
                carry: out.carry.clone(),
            }
        })
        .collect())
}
