//! Beam search for single-line suggestions.
//!
//! Three changes to the textbook algorithm:
//!
//! * while a pending (healed) prefix is not fully reproduced, only tokens
//!   compatible with it may be chosen;
//! * hypotheses that emit the newline token leave the beam and are collected
//!   as complete lines;
//! * the search stops early once every live hypothesis is `k` times less
//!   likely than the best collected line.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::lm::LanguageModel;
use crate::markers;
use crate::tokenizer::Tokenizer;
use crate::TokenId;

/// What the generator needs to know about the vocabulary.
pub trait TokenSet {
    fn token_text(&self, id: TokenId) -> &str;
    fn newline_id(&self) -> TokenId;
    /// Tokens that may appear in a suggestion (the newline included).
    fn is_generable(&self, id: TokenId) -> bool;
}

impl TokenSet for Tokenizer {
    fn token_text(&self, id: TokenId) -> &str {
        self.render(id).unwrap_or("")
    }

    fn newline_id(&self) -> TokenId {
        markers::NEWLINE_ID
    }

    fn is_generable(&self, id: TokenId) -> bool {
        id == markers::NEWLINE_ID || !markers::is_special(id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamConfig {
    pub beam_width: usize,
    pub max_iterations: usize,
    /// `k`: live hypotheses this many times less likely than the best
    /// terminated one stop the search.
    pub termination_ratio: f64,
    /// Characters cut off by token healing that the suggestion must start with.
    pub pending_prefix: String,
    /// Collect newline-terminated hypotheses. When off, the newline is an
    /// ordinary token, only the iteration limit stops the search and the
    /// final beam is returned; suggestions are then cut at the first newline.
    pub collect_terminated: bool,
    /// Renormalize over admissible tokens while the prefix constraint is active.
    pub renormalize_constrained: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_width: 5,
            max_iterations: 20,
            termination_ratio: 3.0,
            pending_prefix: String::new(),
            collect_terminated: true,
            renormalize_constrained: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BeamConfigError {
    ZeroBeamWidth,
    ZeroIterations,
    RatioNotAboveOne,
}

impl core::fmt::Display for BeamConfigError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let msg = match self {
            BeamConfigError::ZeroBeamWidth => "beam width must be at least 1",
            BeamConfigError::ZeroIterations => "max iterations must be at least 1",
            BeamConfigError::RatioNotAboveOne => "termination ratio must be greater than 1",
        };
        f.write_str(msg)
    }
}

impl core::error::Error for BeamConfigError {}

impl BeamConfig {
    pub fn validate(&self) -> Result<(), BeamConfigError> {
        if self.beam_width == 0 {
            return Err(BeamConfigError::ZeroBeamWidth);
        }
        if self.max_iterations == 0 {
            return Err(BeamConfigError::ZeroIterations);
        }
        if !(self.termination_ratio > 1.0) {
            return Err(BeamConfigError::RatioNotAboveOne);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Hypothesis<S> {
    /// Generated ids, context excluded.
    pub ids: Vec<TokenId>,
    pub log_prob: f64,
    pub terminated: bool,
    /// Model state after `ids`; dropped once the hypothesis terminates.
    pub state: Option<S>,
    /// Text of `ids`.
    pub text: String,
}

impl<S> Hypothesis<S> {
    pub fn mean_log_prob(&self) -> f64 {
        if self.ids.is_empty() {
            0.0
        } else {
            self.log_prob / self.ids.len() as f64
        }
    }

    /// Text up to the first newline.
    pub fn line(&self) -> &str {
        self.text.split('\n').next().unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    AllTerminated,
    RatioCutoff,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::MaxIterations => "max_iterations",
            StopReason::AllTerminated => "all_terminated",
            StopReason::RatioCutoff => "ratio_cutoff",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerationResult<S> {
    /// Sorted by log-probability, descending, then by ids.
    pub hypotheses: Vec<Hypothesis<S>>,
    pub iterations_used: usize,
    pub stop_reason: StopReason,
    /// No token could continue the pending prefix.
    pub constraint_exhausted: bool,
}

/// `live_best < terminated_best - ln(k)`, false when nothing terminated yet.
pub fn ratio_cutoff_check(live_best: f64, terminated_best: Option<f64>, k: f64) -> bool {
    match terminated_best {
        Some(t) => live_best < t - libm::log(k),
        None => false,
    }
}

fn rank_order<S>(a: &Hypothesis<S>, b: &Hypothesis<S>) -> Ordering {
    b.log_prob.total_cmp(&a.log_prob).then_with(|| a.ids.cmp(&b.ids))
}

/// Heap entry ordered so that the *worst* candidate is on top.
#[derive(Clone, Copy)]
struct Candidate {
    log_prob: f64,
    /// Rank of the parent in id order, for deterministic ties.
    parent_rank: usize,
    parent: usize,
    token: TokenId,
}

impl Candidate {
    fn better(&self, other: &Self) -> Ordering {
        self.log_prob
            .total_cmp(&other.log_prob)
            .then_with(|| other.parent_rank.cmp(&self.parent_rank))
            .then_with(|| other.token.cmp(&self.token))
    }
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.better(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        other.better(self)
    }
}

fn remaining<'p>(pending: &'p str, text: &str) -> &'p str {
    pending.get(text.len()..).unwrap_or("")
}

fn admissible(remaining: &str, token: &str) -> bool {
    remaining.is_empty() || remaining.starts_with(token) || token.starts_with(remaining)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(values.map(|v| libm::exp(v - max)).sum::<f64>())
}

/// Runs the search from a processed context.
pub fn generate<M: LanguageModel>(
    model: &M,
    context: &M::State,
    config: &BeamConfig,
    tokens: &impl TokenSet,
) -> GenerationResult<M::State> {
    generate_cancellable(model, context, config, tokens, &mut || false)
        .expect("never cancelled")
}

/// [`generate`] that polls `cancelled` before every iteration and gives up
/// with `None` when it returns true.
pub fn generate_cancellable<M: LanguageModel>(
    model: &M,
    context: &M::State,
    config: &BeamConfig,
    tokens: &impl TokenSet,
    cancelled: &mut dyn FnMut() -> bool,
) -> Option<GenerationResult<M::State>> {
    let width = config.beam_width.max(1);
    let pending = config.pending_prefix.as_str();
    let newline = tokens.newline_id();
    let vocab = model.vocab_size();

    let mut live: Vec<Hypothesis<M::State>> = alloc::vec![Hypothesis {
        ids: Vec::new(),
        log_prob: 0.0,
        terminated: false,
        state: Some(context.clone()),
        text: String::new(),
    }];
    let mut terminated: Vec<Hypothesis<M::State>> = Vec::new();
    let mut iterations = 0;
    let mut constraint_exhausted = false;

    let stop_reason = loop {
        if iterations == config.max_iterations {
            break StopReason::MaxIterations;
        }
        if live.is_empty() {
            break StopReason::AllTerminated;
        }
        if config.collect_terminated {
            let live_best = live.iter().map(|h| h.log_prob).fold(f64::NEG_INFINITY, f64::max);
            let best_done = terminated.iter().map(|h| h.log_prob).reduce(f64::max);
            if ratio_cutoff_check(live_best, best_done, config.termination_ratio) {
                break StopReason::RatioCutoff;
            }
        }
        if cancelled() {
            return None;
        }
        iterations += 1;

        let mut order: Vec<usize> = (0..live.len()).collect();
        order.sort_by(|&a, &b| live[a].ids.cmp(&live[b].ids));
        let mut parent_rank = alloc::vec![0; live.len()];
        for (rank, &i) in order.iter().enumerate() {
            parent_rank[i] = rank;
        }

        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(width + 1);
        let offer = |c: Candidate, heap: &mut BinaryHeap<Candidate>| {
            if heap.len() < width {
                heap.push(c);
            } else if heap.peek().is_some_and(|worst| c.better(worst) == Ordering::Greater) {
                heap.pop();
                heap.push(c);
            }
        };
        let mut any_admissible = false;
        for (p, hyp) in live.iter().enumerate() {
            let dist = model.next_distribution(hyp.state.as_ref().expect("live state"));
            let rest = remaining(pending, &hyp.text);
            let ok = |t: TokenId| {
                tokens.is_generable(t) && dist.log_prob(t).is_finite() && admissible(rest, tokens.token_text(t))
            };
            let shift = if config.renormalize_constrained && !rest.is_empty() {
                let admitted = (0..vocab as TokenId).filter(|&t| ok(t)).map(|t| dist.log_prob(t));
                -log_sum_exp(admitted)
            } else {
                0.0
            };
            for t in 0..vocab as TokenId {
                if !ok(t) {
                    continue;
                }
                any_admissible = true;
                let lp = hyp.log_prob + (dist.log_prob(t) + shift).min(0.0);
                offer(
                    Candidate { log_prob: lp, parent_rank: parent_rank[p], parent: p, token: t },
                    &mut heap,
                );
            }
        }
        if !any_admissible && !pending.is_empty() && live.iter().all(|h| h.text.len() < pending.len()) {
            constraint_exhausted = true;
        }

        let mut chosen = heap.into_vec();
        chosen.sort_by(|a, b| b.better(a));
        let mut next_live = Vec::with_capacity(width);
        for c in chosen {
            let t = c.token;
            let parent = &live[c.parent];
            let mut ids = parent.ids.clone();
            ids.push(t);
            let mut text = parent.text.clone();
            text.push_str(tokens.token_text(t));
            if t == newline && config.collect_terminated {
                let hyp = Hypothesis { ids, log_prob: c.log_prob, terminated: true, state: None, text };
                add_terminated(&mut terminated, hyp);
            } else {
                let state = model.advance(parent.state.as_ref().expect("live state"), t);
                let terminated = text.contains('\n');
                next_live.push(Hypothesis { ids, log_prob: c.log_prob, terminated, state: Some(state), text });
            }
        }
        live = next_live;
    };

    let mut hypotheses = if config.collect_terminated { terminated } else { live };
    hypotheses.sort_by(rank_order);
    Some(GenerationResult { hypotheses, iterations_used: iterations, stop_reason, constraint_exhausted })
}

/// Adds to the pool, keeping only the best-scored hypothesis per text.
fn add_terminated<S>(pool: &mut Vec<Hypothesis<S>>, hyp: Hypothesis<S>) {
    match pool.iter_mut().find(|h| h.text == hyp.text) {
        Some(existing) => {
            if rank_order(&hyp, existing) == Ordering::Less {
                *existing = hyp;
            }
        }
        None => pool.push(hyp),
    }
}
