//! Language model contract and the n-gram reference implementation.
//!
//! The generator, cache and engine only see [`LanguageModel`], so a neural
//! backend can replace [`NgramModel`] without touching them.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use hashbrown::HashMap;

use crate::formatter::DEFAULT_MAX_CONTEXT;
use crate::TokenId;

/// A processed token prefix that can be extended one token at a time.
pub trait LmState: Clone + Send {
    /// Exact id sequence this state represents.
    fn processed_tokens(&self) -> &[TokenId];
}

/// Log-probabilities over the whole vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    log_probs: Vec<f64>,
}

impl NextTokenDistribution {
    pub fn from_log_probs(log_probs: Vec<f64>) -> Self {
        NextTokenDistribution { log_probs }
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_prob(&self, id: TokenId) -> f64 {
        self.log_probs[id as usize]
    }

    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, lp) in self.log_probs.iter().enumerate() {
            if *lp > self.log_probs[best] {
                best = i;
            }
        }
        best as TokenId
    }

    /// `|sum(exp(lp)) - 1|`.
    pub fn normalization_error(&self) -> f64 {
        let sum: f64 = self.log_probs.iter().map(|lp| libm::exp(*lp)).sum();
        libm::fabs(sum - 1.0)
    }
}

/// An autoregressive model over token ids.
///
/// `next_distribution(advance(s, t))` must equal
/// `next_distribution(process_context(s.tokens ++ [t]))` exactly; prefix
/// caching relies on it.
pub trait LanguageModel {
    type State: LmState;

    fn vocab_size(&self) -> usize;

    fn max_context_length(&self) -> usize;

    fn process_context(&self, ids: &[TokenId]) -> Self::State;

    fn next_distribution(&self, state: &Self::State) -> NextTokenDistribution;

    fn advance(&self, state: &Self::State, id: TokenId) -> Self::State;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LmError {
    OrderTooSmall(usize),
    BadBackoff,
    EmptyInput,
    TokenOutOfRange(TokenId),
    Artifact(String),
}

impl fmt::Display for LmError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LmError::OrderTooSmall(n) => write!(f, "n-gram order must be at least 2, got {n}"),
            LmError::BadBackoff => write!(f, "backoff factor must lie strictly between 0 and 1"),
            LmError::EmptyInput => write!(f, "no non-empty token sequence to fit"),
            LmError::TokenOutOfRange(id) => write!(f, "token id {id} is outside the vocabulary"),
            LmError::Artifact(msg) => write!(f, "model artifact: {msg}"),
        }
    }
}

impl core::error::Error for LmError {}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NgramState {
    tokens: Vec<TokenId>,
}

impl LmState for NgramState {
    fn processed_tokens(&self) -> &[TokenId] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Successors {
    total: u64,
    /// Sorted by token id.
    next: Vec<(TokenId, u64)>,
}

pub const DEFAULT_BACKOFF: f64 = 0.4;

/// Stupid-backoff n-gram model, renormalized into a proper distribution.
///
/// The score of `w` after history `h` is the count ratio at the longest
/// suffix of `h` that was followed by `w`, times `backoff` for every order
/// skipped; the unigram level uses add-one counts so every token has mass.
#[derive(Debug, Clone)]
pub struct NgramModel {
    order: usize,
    backoff: f64,
    vocab_size: usize,
    max_context: usize,
    tables: HashMap<Vec<TokenId>, Successors>,
    unigram: Vec<f64>,
    ln_unigram: Vec<f64>,
}

impl PartialEq for NgramModel {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
            && self.backoff.to_bits() == other.backoff.to_bits()
            && self.vocab_size == other.vocab_size
            && self.tables == other.tables
    }
}

fn check_params(order: usize, backoff: f64) -> Result<(), LmError> {
    if order < 2 {
        return Err(LmError::OrderTooSmall(order));
    }
    if !(backoff > 0.0 && backoff < 1.0) {
        return Err(LmError::BadBackoff);
    }
    Ok(())
}

impl NgramModel {
    /// Counts every k-gram with `k <= order` in the sequences.
    pub fn fit<S: AsRef<[TokenId]>>(
        sequences: &[S],
        order: usize,
        backoff: f64,
        vocab_size: usize,
    ) -> Result<Self, LmError> {
        check_params(order, backoff)?;
        if sequences.iter().all(|s| s.as_ref().is_empty()) {
            return Err(LmError::EmptyInput);
        }
        let mut counts: HashMap<Vec<TokenId>, HashMap<TokenId, u64>> = HashMap::new();
        for seq in sequences {
            let seq = seq.as_ref();
            for (j, &w) in seq.iter().enumerate() {
                if w as usize >= vocab_size {
                    return Err(LmError::TokenOutOfRange(w));
                }
                for k in 0..order.min(j + 1) {
                    let ctx = &seq[j - k..j];
                    match counts.get_mut(ctx) {
                        Some(m) => *m.entry(w).or_default() += 1,
                        None => {
                            let mut m = HashMap::new();
                            m.insert(w, 1);
                            counts.insert(ctx.to_vec(), m);
                        }
                    }
                }
            }
        }
        let tables = counts
            .into_iter()
            .map(|(ctx, m)| {
                let mut next: Vec<(TokenId, u64)> = m.into_iter().collect();
                next.sort_unstable();
                let total = next.iter().map(|(_, c)| c).sum();
                (ctx, Successors { total, next })
            })
            .collect();
        Ok(Self::from_tables(order, backoff, vocab_size, tables))
    }

    fn from_tables(
        order: usize,
        backoff: f64,
        vocab_size: usize,
        tables: HashMap<Vec<TokenId>, Successors>,
    ) -> Self {
        let mut unigram = vec![1.0; vocab_size];
        let mut n = 0u64;
        if let Some(s) = tables.get(&[][..]) {
            n = s.total;
            for (w, c) in &s.next {
                unigram[*w as usize] += *c as f64;
            }
        }
        let denom = (n + vocab_size as u64) as f64;
        for u in &mut unigram {
            *u /= denom;
        }
        let ln_unigram = unigram.iter().map(|u| libm::log(*u)).collect();
        NgramModel {
            order,
            backoff,
            vocab_size,
            max_context: DEFAULT_MAX_CONTEXT,
            tables,
            unigram,
            ln_unigram,
        }
    }

    pub fn with_max_context(mut self, max_context: usize) -> Self {
        self.max_context = max_context;
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn backoff(&self) -> f64 {
        self.backoff
    }

    /// Raw count of `context ++ [token]`.
    pub fn count(&self, context: &[TokenId], token: TokenId) -> u64 {
        self.tables.get(context).map_or(0, |s| {
            s.next.binary_search_by_key(&token, |e| e.0).map_or(0, |i| s.next[i].1)
        })
    }

    /// Every stored `(context, token, count)` record in sorted order.
    pub fn records(&self) -> Vec<(&[TokenId], TokenId, u64)> {
        let mut contexts: Vec<&Vec<TokenId>> = self.tables.keys().collect();
        contexts.sort_unstable();
        let mut out = Vec::new();
        for ctx in contexts {
            for (w, c) in &self.tables[ctx].next {
                out.push((ctx.as_slice(), *w, *c));
            }
        }
        out
    }

    /// Distribution after `history`; only its last `order - 1` ids matter.
    pub fn distribution_after(&self, history: &[TokenId]) -> NextTokenDistribution {
        let m = history.len().min(self.order - 1);
        let h = &history[history.len() - m..];
        let v = self.vocab_size;

        let mut assigned = vec![false; v];
        let mut overrides: Vec<(usize, f64)> = Vec::new();
        let mut factor = 1.0;
        for k in (1..=m).rev() {
            if let Some(s) = self.tables.get(&h[m - k..]) {
                let total = s.total as f64;
                for (w, c) in &s.next {
                    let w = *w as usize;
                    if !assigned[w] {
                        assigned[w] = true;
                        overrides.push((w, factor * (*c as f64) / total));
                    }
                }
            }
            factor *= self.backoff;
        }
        // `factor` is now backoff^m, the weight of the unigram level.
        let mut rest = 0.0;
        for w in 0..v {
            if !assigned[w] {
                rest += self.unigram[w];
            }
        }
        let z = factor * rest + overrides.iter().map(|(_, s)| s).sum::<f64>();
        let shift = libm::log(factor) - libm::log(z);
        let ln_z = libm::log(z);
        let mut log_probs: Vec<f64> = self.ln_unigram.iter().map(|lu| lu + shift).collect();
        for (w, s) in overrides {
            log_probs[w] = libm::log(s) - ln_z;
        }
        NextTokenDistribution { log_probs }
    }

    /// Binary `NGLM1` artifact.
    pub fn to_bytes(&self) -> Vec<u8> {
        let records = self.records();
        let mut out = Vec::with_capacity(32 + records.len() * 24);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.order as u32).to_le_bytes());
        out.extend_from_slice(&self.backoff.to_bits().to_le_bytes());
        out.extend_from_slice(&(self.vocab_size as u32).to_le_bytes());
        out.extend_from_slice(&(records.len() as u64).to_le_bytes());
        for (ctx, w, c) in records {
            out.push(ctx.len() as u8);
            for id in ctx {
                out.extend_from_slice(&id.to_le_bytes());
            }
            out.extend_from_slice(&w.to_le_bytes());
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LmError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(LmError::Artifact("missing NGLM1 magic".to_string()));
        }
        let order = r.u32()? as usize;
        let backoff = f64::from_bits(r.u64()?);
        check_params(order, backoff)?;
        let vocab_size = r.u32()? as usize;
        let count = r.u64()?;
        let mut tables: HashMap<Vec<TokenId>, Successors> = HashMap::new();
        let mut prev: Option<(Vec<TokenId>, TokenId)> = None;
        for _ in 0..count {
            let len = r.take(1)?[0] as usize;
            if len >= order {
                return Err(LmError::Artifact("context longer than order - 1".to_string()));
            }
            let mut ctx = Vec::with_capacity(len);
            for _ in 0..len {
                ctx.push(r.u32()?);
            }
            let w = r.u32()?;
            let c = r.u64()?;
            if let Some(&bad) = ctx.iter().chain(core::iter::once(&w)).find(|&&id| id as usize >= vocab_size) {
                return Err(LmError::TokenOutOfRange(bad));
            }
            if c == 0 {
                return Err(LmError::Artifact("zero count record".to_string()));
            }
            let key = (ctx, w);
            if prev.as_ref().is_some_and(|p| *p >= key) {
                return Err(LmError::Artifact("records are not strictly sorted".to_string()));
            }
            let entry = tables
                .entry(key.0.clone())
                .or_insert_with(|| Successors { total: 0, next: Vec::new() });
            entry.total += c;
            entry.next.push((w, c));
            prev = Some(key);
        }
        if r.pos != bytes.len() {
            return Err(LmError::Artifact("trailing bytes".to_string()));
        }
        Ok(Self::from_tables(order, backoff, vocab_size, tables))
    }
}

const MAGIC: &[u8] = b"NGLM1";

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LmError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| LmError::Artifact("truncated".to_string()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, LmError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, LmError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl LanguageModel for NgramModel {
    type State = NgramState;

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn max_context_length(&self) -> usize {
        self.max_context
    }

    fn process_context(&self, ids: &[TokenId]) -> NgramState {
        debug_assert!(ids.iter().all(|id| (*id as usize) < self.vocab_size));
        NgramState { tokens: ids.to_vec() }
    }

    fn next_distribution(&self, state: &NgramState) -> NextTokenDistribution {
        self.distribution_after(&state.tokens)
    }

    fn advance(&self, state: &NgramState, id: TokenId) -> NgramState {
        let mut tokens = Vec::with_capacity(state.tokens.len() + 1);
        tokens.extend_from_slice(&state.tokens);
        tokens.push(id);
        NgramState { tokens }
    }
}
