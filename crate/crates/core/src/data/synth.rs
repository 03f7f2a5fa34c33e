use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corpus::{AlignedPair, Links, ParallelCorpus};
use crate::{Error, Result};

fn check(vocab_size: usize, min_len: usize, max_len: usize) -> Result<()> {
    if vocab_size < 2 {
        return Err(Error::Config(format!("synthetic vocabulary needs at least 2 words, got {vocab_size}")));
    }
    if min_len == 0 || min_len > max_len {
        return Err(Error::Config(format!("invalid length range {min_len}..={max_len}")));
    }
    Ok(())
}

/// Random sentences over `w0..w{vocab_size-1}` copied verbatim to the
/// target, with identity gold links.
pub fn gen_copy_task(vocab_size: usize, min_len: usize, max_len: usize, count: usize, seed: u64) -> Result<ParallelCorpus> {
    check(vocab_size, min_len, max_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..count)
        .map(|_| {
            let len = rng.random_range(min_len..=max_len);
            let src: Vec<String> = (0..len)
                .map(|_| format!("w{}", rng.random_range(0..vocab_size)))
                .collect();
            AlignedPair {
                trg: src.clone(),
                links: Some((0..len).map(|i| (i, i)).collect()),
                src,
            }
        })
        .collect();
    Ok(ParallelCorpus::new(pairs))
}

/// Word-for-word translation through a fixed random bijection, optionally
/// with reversed word order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LexicalTask {
    pub corpus: ParallelCorpus,
    /// `lexicon[i] = j` translates source word `s{i}` into target word `t{j}`.
    pub lexicon: Vec<usize>,
}

impl LexicalTask {
    pub fn gold_links(&self) -> Vec<Links> {
        self.corpus
            .pairs
            .iter()
            .map(|p| p.links.clone().unwrap_or_default())
            .collect()
    }
}

/// Source words `s{i}`, target words `t{σ(i)}` for a bijection σ drawn from
/// `seed`. Target position `i` translates source position `π(i)`, where π is
/// the identity or, with `invert`, the full reversal.
pub fn gen_lexical_task(
    vocab_size: usize,
    min_len: usize,
    max_len: usize,
    count: usize,
    seed: u64,
    invert: bool,
) -> Result<LexicalTask> {
    check(vocab_size, min_len, max_len)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lexicon: Vec<usize> = (0..vocab_size).collect();
    lexicon.shuffle(&mut rng);
    let pairs = (0..count)
        .map(|_| {
            let len = rng.random_range(min_len..=max_len);
            let words: Vec<usize> = (0..len).map(|_| rng.random_range(0..vocab_size)).collect();
            let pi = |i: usize| if invert { len - 1 - i } else { i };
            AlignedPair {
                src: words.iter().map(|w| format!("s{w}")).collect(),
                trg: (0..len).map(|i| format!("t{}", lexicon[words[pi(i)]])).collect(),
                links: Some((0..len).map(|i| (pi(i), i)).collect()),
            }
        })
        .collect();
    Ok(LexicalTask {
        corpus: ParallelCorpus::new(pairs),
        lexicon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn copy_pairs_are_identical_with_identity_links() {
        let c = gen_copy_task(20, 1, 10, 300, 1).unwrap();
        for p in &c.pairs {
            assert_eq!(p.src, p.trg);
            let links = p.links.as_ref().unwrap();
            assert_eq!(links.len(), p.src.len());
            assert!(links.iter().all(|&(s, t)| s == t));
            p.validate().unwrap();
        }
        assert_eq!(c, gen_copy_task(20, 1, 10, 300, 1).unwrap());
    }

    #[test]
    fn copy_lengths_are_uniform() {
        // Pearson chi-square against the uniform law on 1..=10, 9 degrees of
        // freedom; 21.666 is the 0.99 quantile.
        let c = gen_copy_task(20, 1, 10, 10_000, 2).unwrap();
        let mut counts = [0f64; 10];
        for p in &c.pairs {
            counts[p.src.len() - 1] += 1.0;
        }
        let expected = 1000.0;
        let chi2: f64 = counts.iter().map(|o| (o - expected) * (o - expected) / expected).sum();
        assert!(chi2 < 21.666, "chi-square {chi2}");
    }

    #[test]
    fn lexical_links() {
        let t = gen_lexical_task(10, 3, 3, 5, 3, false).unwrap();
        for p in &t.corpus.pairs {
            assert!(p.links.as_ref().unwrap().iter().all(|&(s, t)| s == t));
        }
        let t = gen_lexical_task(10, 3, 3, 5, 3, true).unwrap();
        for p in &t.corpus.pairs {
            let links: Vec<_> = p.links.as_ref().unwrap().iter().copied().collect();
            assert_eq!(links, vec![(0, 2), (1, 1), (2, 0)]);
        }
    }

    #[test]
    fn inverse_lexicon_recovers_a_permutation_of_the_source() {
        let t = gen_lexical_task(12, 2, 8, 50, 4, true).unwrap();
        let mut inverse = vec![0; 12];
        for (i, &j) in t.lexicon.iter().enumerate() {
            inverse[j] = i;
        }
        for p in &t.corpus.pairs {
            let mut back: Vec<String> = p
                .trg
                .iter()
                .map(|w| format!("s{}", inverse[w[1..].parse::<usize>().unwrap()]))
                .collect();
            let mut src = p.src.clone();
            back.sort();
            src.sort();
            assert_eq!(back, src);
            p.validate().unwrap();
        }
    }

    #[test]
    fn parameters_are_validated() {
        assert!(gen_copy_task(1, 1, 3, 5, 0).is_err());
        assert!(gen_lexical_task(5, 4, 3, 5, 0, false).is_err());
        assert!(gen_lexical_task(5, 0, 3, 5, 0, false).is_err());
    }
}
