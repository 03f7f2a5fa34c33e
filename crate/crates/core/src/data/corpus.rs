use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::batch::EncodedPair;
use super::vocab::{Side, Vocabulary};
use crate::{Error, Result};

/// `(source index, target index)`, both 0-based and never pointing at eos.
pub type Link = (usize, usize);
pub type Links = BTreeSet<Link>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignedPair {
    pub src: Vec<String>,
    pub trg: Vec<String>,
    /// Gold sure links, when known.
    pub links: Option<Links>,
}

impl AlignedPair {
    pub fn new(src: Vec<String>, trg: Vec<String>) -> Self {
        AlignedPair { src, trg, links: None }
    }

    /// Checks that every link indexes a real token of the pair.
    pub fn validate(&self) -> Result<()> {
        if let Some(links) = &self.links {
            for &(s, t) in links {
                if s >= self.src.len() || t >= self.trg.len() {
                    return Err(Error::Contract(format!(
                        "link {s}-{t} out of range for a {}×{} pair",
                        self.src.len(),
                        self.trg.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub pairs: Vec<AlignedPair>,
}

impl ParallelCorpus {
    pub fn new(pairs: Vec<AlignedPair>) -> Self {
        ParallelCorpus { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn sources(&self) -> Vec<Vec<String>> {
        self.pairs.iter().map(|p| p.src.clone()).collect()
    }

    pub fn targets(&self) -> Vec<Vec<String>> {
        self.pairs.iter().map(|p| p.trg.clone()).collect()
    }

    /// Splits off the last `n` pairs.
    pub fn split_tail(mut self, n: usize) -> (ParallelCorpus, ParallelCorpus) {
        let at = self.pairs.len().saturating_sub(n);
        let tail = self.pairs.split_off(at);
        (self, ParallelCorpus::new(tail))
    }

    pub fn encode(&self, src_vocab: &Vocabulary, trg_vocab: &Vocabulary) -> Vec<EncodedPair> {
        self.pairs
            .iter()
            .map(|p| EncodedPair {
                src: src_vocab.encode(&p.src, Side::Source),
                trg: trg_vocab.encode(&p.trg, Side::Target),
            })
            .collect()
    }
}
