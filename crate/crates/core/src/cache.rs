//! Single-entry cache of a processed context.
//!
//! While the user types forward, each new context extends the previous one,
//! so the model only has to advance through the new tokens. On a miss only
//! the trailing half of the capacity is processed, leaving room for the
//! context to grow before the next reset.

use alloc::vec::Vec;

use crate::lm::{LanguageModel, LmState};
use crate::TokenId;

pub const DEFAULT_INIT_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub enum Lookup<S> {
    /// Cached ids are a prefix of the request: advance `state` through `suffix`.
    Hit { state: S, suffix: Vec<TokenId> },
    /// Request is a prefix of the cached ids and stale reuse is enabled.
    Stale { state: S },
    /// Process `ids` (the trailing part of the request) from scratch.
    Miss { ids: Vec<TokenId> },
}

impl<S> Lookup<S> {
    pub fn is_hit(&self) -> bool {
        !matches!(self, Lookup::Miss { .. })
    }
}

#[derive(Debug, Clone)]
pub struct PrefixCache<S> {
    ids: Vec<TokenId>,
    state: Option<S>,
    capacity: usize,
    init_fraction: f64,
    /// Reuse a longer cached state when the context shrank.
    pub stale_reuse: bool,
}

impl<S: LmState> PrefixCache<S> {
    /// `init_fraction` is clamped into (0, 1].
    pub fn new(capacity: usize, init_fraction: f64) -> Self {
        let init_fraction = if init_fraction > 0.0 { init_fraction.min(1.0) } else { DEFAULT_INIT_FRACTION };
        PrefixCache { ids: Vec::new(), state: None, capacity: capacity.max(1), init_fraction, stale_reuse: false }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Token count processed on a cold start: ⌊init_fraction · L⌋, at least 1.
    pub fn warm_start_len(&self) -> usize {
        ((self.init_fraction * self.capacity as f64) as usize).max(1)
    }

    pub fn cached_ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_none()
    }

    pub fn clear(&mut self) {
        self.ids.clear();
        self.state = None;
    }

    pub fn lookup(&self, context_ids: &[TokenId]) -> Lookup<S> {
        if let Some(state) = &self.state {
            if context_ids.len() <= self.capacity && context_ids.starts_with(&self.ids) {
                return Lookup::Hit { state: state.clone(), suffix: context_ids[self.ids.len()..].to_vec() };
            }
            if self.stale_reuse && !context_ids.is_empty() && self.ids.starts_with(context_ids) {
                return Lookup::Stale { state: state.clone() };
            }
        }
        let keep = self.warm_start_len().min(context_ids.len());
        Lookup::Miss { ids: context_ids[context_ids.len() - keep..].to_vec() }
    }

    /// Replaces the entry. Over-long sequences are cut to the warm-start
    /// length and reprocessed.
    pub fn store<M: LanguageModel<State = S>>(&mut self, model: &M, context_ids: &[TokenId], state: S) {
        if context_ids.len() > self.capacity {
            let keep = self.warm_start_len().min(context_ids.len());
            let tail = &context_ids[context_ids.len() - keep..];
            self.state = Some(model.process_context(tail));
            self.ids = tail.to_vec();
        } else {
            debug_assert_eq!(state.processed_tokens(), context_ids);
            self.ids = context_ids.to_vec();
            self.state = Some(state);
        }
    }

    /// Lookup, advance or process, and store. Returns the state for
    /// `context_ids` (or its processed tail) and whether the cache was used.
    pub fn process<M: LanguageModel<State = S>>(&mut self, model: &M, context_ids: &[TokenId]) -> (S, bool) {
        match self.lookup(context_ids) {
            Lookup::Hit { mut state, suffix } => {
                for &id in &suffix {
                    state = model.advance(&state, id);
                }
                self.store(model, context_ids, state.clone());
                (state, true)
            }
            Lookup::Stale { state } => (state, true),
            Lookup::Miss { ids } => {
                let state = model.process_context(&ids);
                self.store(model, &ids, state.clone());
                (state, false)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::NgramModel;
    use alloc::vec;

    fn model() -> NgramModel {
        NgramModel::fit(&[vec![1u32, 2, 3, 1, 2, 4]], 3, 0.4, 8).unwrap().with_max_context(8)
    }

    #[test]
    fn prefix_extension_hits() {
        let m = model();
        let mut cache = PrefixCache::new(8, 0.5);
        cache.store(&m, &[0, 1, 2], m.process_context(&[0, 1, 2]));
        match cache.lookup(&[0, 1, 2, 3, 4]) {
            Lookup::Hit { suffix, .. } => assert_eq!(suffix, vec![3, 4]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shorter_context_misses() {
        let m = model();
        let mut cache = PrefixCache::new(8, 0.5);
        cache.store(&m, &[0, 1, 2], m.process_context(&[0, 1, 2]));
        assert_eq!(cache.lookup(&[0, 1]), Lookup::Miss { ids: vec![0, 1] });
        cache.stale_reuse = true;
        assert!(matches!(cache.lookup(&[0, 1]), Lookup::Stale { .. }));
    }

    #[test]
    fn empty_cache_processes_half_capacity() {
        let cache: PrefixCache<<NgramModel as LanguageModel>::State> = PrefixCache::new(8, 0.5);
        assert_eq!(cache.lookup(&[1, 2, 3, 4, 5, 6, 7]), Lookup::Miss { ids: vec![4, 5, 6, 7] });
    }

    #[test]
    fn overflow_store_resets_to_half() {
        let m = model();
        let mut cache = PrefixCache::new(8, 0.5);
        let ids: Vec<TokenId> = (0..9).map(|i| i % 5).collect();
        cache.store(&m, &ids, m.process_context(&ids));
        assert_eq!(cache.cached_ids(), &ids[5..]);
        assert_eq!(cache.state.as_ref().unwrap().processed_tokens(), &ids[5..]);
    }

    #[test]
    fn process_tracks_hits() {
        let m = model();
        let mut cache = PrefixCache::new(8, 0.5);
        let (_, hit) = cache.process(&m, &[1, 2]);
        assert!(!hit);
        let (state, hit) = cache.process(&m, &[1, 2, 3]);
        assert!(hit);
        assert_eq!(state.processed_tokens(), &[1, 2, 3]);
        assert_eq!(cache.cached_ids(), &[1, 2, 3]);
    }
}
