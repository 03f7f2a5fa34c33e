//! Translation and alignment metrics computed from outputs and attention.

mod align;
mod bleu;
mod coverage;
mod trace;

pub use align::{aer, attention_to_alignment, corpus_aer, AerCounts};
pub use bleu::{bleu, BleuStats, Smoothing};
pub use coverage::{coverage_report, CoverageReport, CoverageSummary, OVER_THRESHOLD, UNDER_THRESHOLD};
pub use trace::{AttentionTrace, TraceStep};

#[cfg(test)]
mod tests;
