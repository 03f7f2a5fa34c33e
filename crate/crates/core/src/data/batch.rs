use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::PAD;
use crate::{Error, Result};

/// Token ids of one sentence pair, each side ending in eos.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedPair {
    pub src: Vec<u32>,
    pub trg: Vec<u32>,
}

/// Right-padded id matrices with masks marking the real cells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub src: Vec<Vec<u32>>,
    pub trg: Vec<Vec<u32>>,
    pub src_mask: Vec<Vec<bool>>,
    pub trg_mask: Vec<Vec<bool>>,
    /// Position of every row in the input pair list.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn from_pairs(pairs: &[&EncodedPair], indices: Vec<usize>) -> Self {
        let (src, src_mask) = pad(pairs.iter().map(|p| p.src.as_slice()));
        let (trg, trg_mask) = pad(pairs.iter().map(|p| p.trg.as_slice()));
        Batch {
            src,
            trg,
            src_mask,
            trg_mask,
            indices,
        }
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

fn pad<'a>(rows: impl Iterator<Item = &'a [u32]> + Clone) -> (Vec<Vec<u32>>, Vec<Vec<bool>>) {
    let width = rows.clone().map(<[u32]>::len).max().unwrap_or(0);
    rows.map(|r| {
        let mut ids = r.to_vec();
        ids.resize(width, PAD);
        let mut mask = vec![true; r.len()];
        mask.resize(width, false);
        (ids, mask)
    })
    .unzip()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batches {
    pub batches: Vec<Batch>,
    /// Pairs skipped because a side exceeded the length limit.
    pub dropped: usize,
}

/// Drops pairs with more than `max_len` tokens (eos not counted) on either
/// side, groups the rest by length and shuffles the groups with `seed`.
pub fn make_batches(pairs: &[EncodedPair], batch_size: usize, max_len: usize, seed: u64) -> Result<Batches> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: Vec<usize> = (0..pairs.len())
        .filter(|&i| pairs[i].src.len() <= max_len + 1 && pairs[i].trg.len() <= max_len + 1)
        .collect();
    let dropped = pairs.len() - kept.len();
    kept.shuffle(&mut rng);
    kept.sort_by_key(|&i| (pairs[i].src.len(), pairs[i].trg.len()));
    let mut batches: Vec<Batch> = kept
        .chunks(batch_size)
        .map(|chunk| {
            let rows: Vec<&EncodedPair> = chunk.iter().map(|&i| &pairs[i]).collect();
            Batch::from_pairs(&rows, chunk.to_vec())
        })
        .collect();
    batches.shuffle(&mut rng);
    Ok(Batches { batches, dropped })
}
