use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;

/// Number of reserved ids at the start of every vocabulary.
pub const RESERVED: usize = 4;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Source,
    Target,
}

/// Token table with ids 0..4 reserved for pad, bos, eos and unk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: BTreeMap<String, u32>,
}

impl Vocabulary {
    /// A vocabulary holding only the reserved tokens.
    pub fn reserved() -> Self {
        let tokens: Vec<String> = [PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN]
            .iter()
            .map(|t| t.to_string())
            .collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            tokens,
            counts: vec![0; RESERVED],
            index,
        }
    }

    /// Rebuilds a vocabulary from `(token, count)` entries in id order. The
    /// first four entries must be the reserved tokens.
    pub fn from_entries(entries: Vec<(String, u64)>) -> Result<Self> {
        let mut v = Vocabulary::reserved();
        for (i, (tok, count)) in entries.into_iter().enumerate() {
            if i < RESERVED {
                if tok != v.tokens[i] {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: alloc::format!("expected reserved token `{}`, found `{tok}`", v.tokens[i]),
                    });
                }
                v.counts[i] = count;
                continue;
            }
            if v.index.contains_key(&tok) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: alloc::format!("duplicate token `{tok}`"),
                });
            }
            v.push(tok, count);
        }
        Ok(v)
    }

    fn push(&mut self, tok: String, count: u64) {
        let id = self.tokens.len() as u32;
        self.index.insert(tok.clone(), id);
        self.tokens.push(tok);
        self.counts.push(count);
    }

    /// Keeps the `max_size − 4` most frequent tokens; ties go to the token
    /// seen first.
    pub fn build<S: AsRef<str>>(sentences: &[Vec<S>], max_size: usize) -> Result<Self> {
        if max_size <= RESERVED {
            return Err(Error::Config(alloc::format!(
                "vocabulary size must exceed {RESERVED}, got {max_size}"
            )));
        }
        let mut first_seen: BTreeMap<&str, (usize, u64)> = BTreeMap::new();
        let mut order = 0;
        for tok in sentences.iter().flatten() {
            let e = first_seen.entry(tok.as_ref()).or_insert_with(|| {
                order += 1;
                (order, 0)
            });
            e.1 += 1;
        }
        if first_seen.is_empty() {
            return Err(Error::EmptyInput("vocabulary corpus has no tokens"));
        }
        let mut ranked: Vec<(&str, usize, u64)> =
            first_seen.into_iter().map(|(t, (o, c))| (t, o, c)).collect();
        ranked.sort_by(|a, b| b.2.cmp(&a.2).then(a.1.cmp(&b.1)));
        let mut v = Vocabulary::reserved();
        for (tok, _, count) in ranked.into_iter().take(max_size - RESERVED) {
            if v.index.contains_key(tok) {
                continue;
            }
            v.push(tok.to_string(), count);
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn count(&self, id: u32) -> Option<u64> {
        self.counts.get(id as usize).copied()
    }

    /// `(token, count)` pairs in id order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, u64)> {
        self.tokens
            .iter()
            .map(String::as_str)
            .zip(self.counts.iter().copied())
    }

    /// Maps tokens to ids and appends eos.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S], _side: Side) -> Vec<u32> {
        let mut ids: Vec<u32> = tokens.iter().map(|t| self.id(t.as_ref())).collect();
        ids.push(EOS);
        ids
    }

    /// Maps ids back to tokens, stopping at the first eos and skipping pad
    /// and bos.
    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter()
            .take_while(|&&id| id != EOS)
            .filter(|&&id| id != PAD && id != BOS)
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN).to_string())
            .collect()
    }
}

/// Convenience wrapper for [`Vocabulary::encode`].
pub fn encode_sentence<S: AsRef<str>>(v: &Vocabulary, tokens: &[S], side: Side) -> Vec<u32> {
    v.encode(tokens, side)
}
