use crate::data::vocab::EOS;
use crate::data::Links;

use super::AttentionTrace;

/// Counts behind corpus AER.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AerCounts {
    pub overlap: usize,
    pub hyp: usize,
    pub sure: usize,
}

impl AerCounts {
    pub fn of(hyp: &Links, sure: &Links) -> Self {
        AerCounts {
            overlap: hyp.intersection(sure).count(),
            hyp: hyp.len(),
            sure: sure.len(),
        }
    }

    pub fn add(&mut self, other: AerCounts) {
        self.overlap += other.overlap;
        self.hyp += other.hyp;
        self.sure += other.sure;
    }

    /// `1 − 2|A∩S| / (|A| + |S|)`; zero when both sets are empty.
    pub fn aer(&self) -> f64 {
        let denom = self.hyp + self.sure;
        if denom == 0 {
            0.0
        } else {
            1.0 - (2 * self.overlap) as f64 / denom as f64
        }
    }
}

/// Alignment error rate with every gold link sure.
pub fn aer(hyp: &Links, sure: &Links) -> f64 {
    AerCounts::of(hyp, sure).aer()
}

/// Corpus AER over aligned pairs of link sets.
pub fn corpus_aer<'a, I>(pairs: I) -> f64
where
    I: IntoIterator<Item = (&'a Links, &'a Links)>,
{
    let mut c = AerCounts::default();
    for (h, s) in pairs {
        c.add(AerCounts::of(h, s));
    }
    c.aer()
}

/// Links each non-eos target step to the source slot it attends to most in
/// the final round, smallest index on ties. Steps attending most to the
/// source eos produce no link.
pub fn attention_to_alignment(trace: &AttentionTrace) -> Links {
    let mut links = Links::new();
    let Some(eos_slot) = trace.eos_slot() else {
        return links;
    };
    for (t, (step, row)) in trace.steps.iter().zip(trace.final_rows()).enumerate() {
        if step.token == EOS {
            continue;
        }
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        if !row.is_empty() && best != eos_slot {
            links.insert((best, t));
        }
    }
    links
}
