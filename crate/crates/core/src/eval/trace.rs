use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// One decoded (or teacher-forced) target position.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceStep {
    pub token: u32,
    /// Attention over the source slots, one vector per round.
    pub rounds: Vec<Vec<f64>>,
}

/// Attention recorded while producing one target sentence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AttentionTrace {
    /// Source ids, eos included, without padding.
    pub source: Vec<u32>,
    pub steps: Vec<TraceStep>,
}

impl AttentionTrace {
    pub fn new(source: Vec<u32>) -> Self {
        AttentionTrace {
            source,
            steps: Vec::new(),
        }
    }

    pub fn push(&mut self, token: u32, rounds: Vec<Vec<f64>>) {
        self.steps.push(TraceStep { token, rounds });
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn rounds(&self) -> usize {
        self.steps.first().map_or(0, |s| s.rounds.len())
    }

    pub fn target(&self) -> Vec<u32> {
        self.steps.iter().map(|s| s.token).collect()
    }

    pub fn eos_slot(&self) -> Option<usize> {
        self.source.len().checked_sub(1)
    }

    /// Rows of round `r` (0-based), one per target step.
    pub fn round_matrix(&self, r: usize) -> Vec<Vec<f64>> {
        self.steps.iter().map(|s| s.rounds[r].clone()).collect()
    }

    /// Final-round attention row of every step.
    pub fn final_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.steps
            .iter()
            .map(|s| s.rounds.last().map_or(&[][..], |r| r.as_slice()))
    }

    /// Checks shapes and that every row lies on the simplex within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let n = self.source.len();
        let rounds = self.rounds();
        for (t, step) in self.steps.iter().enumerate() {
            if step.rounds.len() != rounds || rounds == 0 {
                return Err(Error::Contract(format!("step {t} has {} rounds", step.rounds.len())));
            }
            for (r, row) in step.rounds.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::Contract(format!(
                        "step {t} round {r} has {} entries for {n} source slots",
                        row.len()
                    )));
                }
                let total: f64 = row.iter().sum();
                if row.iter().any(|&v| !(v >= -tol)) || (total - 1.0).abs() > tol {
                    return Err(Error::Numeric(format!(
                        "step {t} round {r} is not a distribution (sum {total})"
                    )));
                }
            }
        }
        Ok(())
    }
}
