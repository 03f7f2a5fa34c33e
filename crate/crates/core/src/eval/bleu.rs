use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;


use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Smoothing {
    #[default]
    None,
    /// `(matches + 1) / (total + 1)` at every order.
    AddOne,
}

/// Sufficient statistics for corpus BLEU.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn new(max_n: usize) -> Self {
        BleuStats {
            matches: alloc::vec![0; max_n],
            totals: alloc::vec![0; max_n],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    pub fn add<S: Ord>(&mut self, hyp: &[S], reference: &[S]) {
        self.hyp_len += hyp.len();
        self.ref_len += reference.len();
        for n in 1..=self.matches.len() {
            let h = ngrams(hyp, n);
            let r = ngrams(reference, n);
            self.totals[n - 1] += h.values().sum::<usize>();
            self.matches[n - 1] += h
                .iter()
                .map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }

    /// Modified precision at order `n` (1-based), if any hypothesis
    /// n-gram exists.
    pub fn precision(&self, n: usize) -> Option<f64> {
        let t = self.totals[n - 1];
        (t > 0).then(|| self.matches[n - 1] as f64 / t as f64)
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            0.0
        } else if self.hyp_len > self.ref_len {
            1.0
        } else {
            libm::exp(1.0 - self.ref_len as f64 / self.hyp_len as f64)
        }
    }

    /// Score in [0, 100]. Orders with no hypothesis n-grams at all (every
    /// hypothesis shorter than n) are left out of the geometric mean.
    pub fn score(&self, smoothing: Smoothing) -> f64 {
        let bp = self.brevity_penalty();
        if bp == 0.0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0;
        for (&m, &t) in self.matches.iter().zip(&self.totals) {
            if t == 0 {
                continue;
            }
            let p = match smoothing {
                Smoothing::None => m as f64 / t as f64,
                Smoothing::AddOne => (m + 1) as f64 / (t + 1) as f64,
            };
            if p == 0.0 {
                return 0.0;
            }
            log_sum += libm::log(p);
            orders += 1;
        }
        if orders == 0 {
            return 0.0;
        }
        100.0 * bp * libm::exp(log_sum / orders as f64)
    }
}

fn ngrams<S: Ord>(tokens: &[S], n: usize) -> BTreeMap<&[S], usize> {
    let mut out = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0) += 1;
        }
    }
    out
}

/// Corpus-level BLEU with one reference per hypothesis.
pub fn bleu<S: Ord>(hyps: &[Vec<S>], refs: &[Vec<S>], max_n: usize, smoothing: Smoothing) -> Result<f64> {
    if hyps.is_empty() {
        return Err(Error::EmptyInput("BLEU hypothesis set"));
    }
    if hyps.len() != refs.len() {
        return Err(Error::Contract(format!(
            "{} hypotheses for {} references",
            hyps.len(),
            refs.len()
        )));
    }
    if max_n == 0 {
        return Err(Error::Config("BLEU order must be at least 1".into()));
    }
    let mut stats = BleuStats::new(max_n);
    for (h, r) in hyps.iter().zip(refs) {
        stats.add(h, r);
    }
    Ok(stats.score(smoothing))
}
