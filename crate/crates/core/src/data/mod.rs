//! Vocabularies, parallel corpora, alignments, batching and the synthetic
//! tasks used for desk-scale experiments.

mod batch;
mod corpus;
pub mod pharaoh;
mod synth;
pub mod vocab;

pub use batch::{make_batches, Batch, Batches, EncodedPair};
pub use corpus::{AlignedPair, Link, Links, ParallelCorpus};
pub use synth::{gen_copy_task, gen_lexical_task, LexicalTask};
pub use vocab::{encode_sentence, Side, Vocabulary};
