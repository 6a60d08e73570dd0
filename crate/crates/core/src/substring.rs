//! Substring membership over a set of strings.
//!
//! A generalized suffix automaton built over the *reversed* strings: walking
//! it with the characters of a text read right-to-left tells how long a
//! suffix of that text is a substring of some member, in time linear in the
//! suffix length.

use alloc::vec;
use alloc::vec::Vec;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct State {
    len: u32,
    link: u32,
    /// Sorted by character.
    next: Vec<(char, u32)>,
}

impl State {
    fn get(&self, c: char) -> Option<u32> {
        self.next.binary_search_by_key(&c, |e| e.0).ok().map(|i| self.next[i].1)
    }

    fn set(&mut self, c: char, to: u32) {
        match self.next.binary_search_by_key(&c, |e| e.0) {
            Ok(i) => self.next[i].1 = to,
            Err(i) => self.next.insert(i, (c, to)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReverseSubstringIndex {
    states: Vec<State>,
}

impl Default for ReverseSubstringIndex {
    fn default() -> Self {
        ReverseSubstringIndex { states: vec![State { len: 0, link: NONE, next: Vec::new() }] }
    }
}

impl ReverseSubstringIndex {
    pub fn new<'a>(strings: impl IntoIterator<Item = &'a str>) -> Self {
        let mut index = Self::default();
        for s in strings {
            let mut last = 0;
            for c in s.chars().rev() {
                last = index.extend(last, c);
            }
        }
        index
    }

    fn clone_state(&mut self, q: u32, len: u32) -> u32 {
        let mut copy = self.states[q as usize].clone();
        copy.len = len;
        self.states.push(copy);
        (self.states.len() - 1) as u32
    }

    fn extend(&mut self, last: u32, c: char) -> u32 {
        let last_len = self.states[last as usize].len;
        if let Some(q) = self.states[last as usize].get(c) {
            if self.states[q as usize].len == last_len + 1 {
                return q;
            }
            let clone = self.clone_state(q, last_len + 1);
            self.states[q as usize].link = clone;
            let mut p = last;
            while p != NONE && self.states[p as usize].get(c) == Some(q) {
                self.states[p as usize].set(c, clone);
                p = self.states[p as usize].link;
            }
            return clone;
        }
        self.states.push(State { len: last_len + 1, link: NONE, next: Vec::new() });
        let cur = (self.states.len() - 1) as u32;
        let mut p = last;
        while p != NONE && self.states[p as usize].get(c).is_none() {
            self.states[p as usize].set(c, cur);
            p = self.states[p as usize].link;
        }
        if p == NONE {
            self.states[cur as usize].link = 0;
        } else {
            let q = self.states[p as usize].get(c).unwrap();
            if self.states[p as usize].len + 1 == self.states[q as usize].len {
                self.states[cur as usize].link = q;
            } else {
                let clone = self.clone_state(q, self.states[p as usize].len + 1);
                let mut pp = p;
                while pp != NONE && self.states[pp as usize].get(c) == Some(q) {
                    self.states[pp as usize].set(c, clone);
                    pp = self.states[pp as usize].link;
                }
                self.states[q as usize].link = clone;
                self.states[cur as usize].link = clone;
            }
        }
        cur
    }

    /// Number of trailing characters of `text` that form a substring of some
    /// indexed string.
    pub fn longest_suffix(&self, text: &str) -> usize {
        let mut state = 0u32;
        let mut n = 0;
        for c in text.chars().rev() {
            match self.states[state as usize].get(c) {
                Some(next) => {
                    state = next;
                    n += 1;
                }
                None => break,
            }
        }
        n
    }

    /// Whether `s` occurs inside some indexed string.
    pub fn contains(&self, s: &str) -> bool {
        self.longest_suffix(s) == s.chars().count()
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use proptest::prelude::*;

    fn brute_contains(set: &[String], s: &str) -> bool {
        set.iter().any(|t| t.contains(s))
    }

    #[test]
    fn finds_substrings() {
        let index = ReverseSubstringIndex::new(["for i in range(", "return True"]);
        assert!(index.contains("for i"));
        assert!(index.contains("n range"));
        assert!(index.contains(""));
        assert!(!index.contains("for j"));
        assert_eq!(index.longest_suffix("x = for i"), 5);
        assert_eq!(index.longest_suffix("é"), 0);
    }

    proptest! {
        #[test]
        fn agrees_with_brute_force(
            set in prop::collection::vec("[abc]{1,6}", 1..8),
            probe in "[abcd]{0,7}",
        ) {
            let index = ReverseSubstringIndex::new(set.iter().map(String::as_str));
            prop_assert_eq!(index.contains(&probe), brute_contains(&set, &probe));
            let n = index.longest_suffix(&probe);
            let tail = &probe[probe.len() - n..];
            prop_assert!(brute_contains(&set, tail));
            if n < probe.len() {
                prop_assert!(!brute_contains(&set, &probe[probe.len() - n - 1..]));
            }
        }
    }
}
