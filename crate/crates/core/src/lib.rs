//! Allocation-only core of a local full-line code completion engine.
//!
//! Everything in this crate is a pure function over in-memory data: source
//! normalization and scope markers, character-pair tokenization, the language
//! model contract with an n-gram reference model, the constrained beam search,
//! the prefix cache, suggestion post-processing, and offline metrics. File IO,
//! timing, threads and the service live in the `linecomp` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod cache;
pub mod corpus;
pub mod eval;
pub mod formatter;
pub mod generator;
pub mod lm;
pub mod markers;
pub mod postprocess;
pub mod substring;
pub mod tokenizer;

/// Index of a token in a [`tokenizer::Vocabulary`].
pub type TokenId = u32;

pub use cache::{Lookup, PrefixCache};
pub use corpus::{CorpusFile, Split, SplitSpec};
pub use formatter::{ComposedContext, FormatterConfig, IndentUnit, ScopedText};
pub use generator::{BeamConfig, GenerationResult, Hypothesis, StopReason};
pub use lm::{LanguageModel, LmState, NgramModel};
pub use postprocess::{FilterConfig, Verdict, VerdictReason};
pub use tokenizer::{Tokenizer, TokenizerConfig};
