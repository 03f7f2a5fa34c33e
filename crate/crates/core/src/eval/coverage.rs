use alloc::vec::Vec;

use crate::data::vocab::EOS;

use super::AttentionTrace;

pub const UNDER_THRESHOLD: f64 = 0.2;
pub const OVER_THRESHOLD: f64 = 2.0;

/// Attention mass received by each source word of one sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    /// Mass per content source position (eos excluded).
    pub mass: Vec<f64>,
    pub under: Vec<usize>,
    pub over: Vec<usize>,
}

impl CoverageReport {
    pub fn words(&self) -> usize {
        self.mass.len()
    }

    pub fn under_pct(&self) -> f64 {
        pct(self.under.len(), self.words())
    }

    pub fn over_pct(&self) -> f64 {
        pct(self.over.len(), self.words())
    }
}

fn pct(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

/// Sums final-round attention over the non-eos target steps for every
/// non-eos source slot and flags words below `under` or above `over`.
pub fn coverage_report(trace: &AttentionTrace, under: f64, over: f64) -> CoverageReport {
    let words = trace.source.len().saturating_sub(1);
    let mut mass = alloc::vec![0.0; words];
    for (step, row) in trace.steps.iter().zip(trace.final_rows()) {
        if step.token == EOS {
            continue;
        }
        for (m, v) in mass.iter_mut().zip(row) {
            *m += v;
        }
    }
    let under = (0..words).filter(|&j| mass[j] < under).collect();
    let over = (0..words).filter(|&j| mass[j] > over).collect();
    CoverageReport { mass, under, over }
}

/// Corpus percentages of under- and over-translated source words.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CoverageSummary {
    pub words: usize,
    pub under: usize,
    pub over: usize,
}

impl CoverageSummary {
    pub fn add(&mut self, r: &CoverageReport) {
        self.words += r.words();
        self.under += r.under.len();
        self.over += r.over.len();
    }

    pub fn under_pct(&self) -> f64 {
        pct(self.under, self.words)
    }

    pub fn over_pct(&self) -> f64 {
        pct(self.over, self.words)
    }
}
