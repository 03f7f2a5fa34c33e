//! Recurrent neural machine translation with key-value memory-augmented
//! attention.
//!
//! The crate is `no_std` (it needs `alloc`) and carries everything that is
//! pure computation: a small reverse-mode differentiation engine, the GRU
//! encoder/decoder, the key/value memory attention with its
//! Address/Read/Forget/Add access loop, greedy and beam decoding, the
//! training objectives and AdaDelta, synthetic corpora and evaluation
//! metrics (BLEU, AER, attention coverage). File formats and the command
//! line live in the `kvmem-cli` crate.
#![cfg_attr(not(test), no_std)]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;

pub mod attention;
pub mod autodiff;
pub mod data;
pub mod decode;
mod error;
pub mod eval;
pub mod model;
pub mod params;
mod real;
pub mod rnn;
pub mod tensor;
pub mod training;
pub mod wide;

pub use error::{Error, Result};
pub use real::Real;
pub use tensor::{Shape, Tensor};
pub use wide::Wide;
