//! Filtering and repair of generated lines.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::generator::Hypothesis;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    /// Case-insensitive substrings; `*` matches any run of characters.
    pub danger_patterns: Vec<String>,
    /// Matched case-insensitively on word boundaries.
    pub profanity: Vec<String>,
    /// Bits per character.
    pub secret_entropy_threshold: f64,
    pub secret_min_length: usize,
    pub min_mean_token_logprob: f64,
    pub correctness_timeout_ms: u64,
}

pub const DEFAULT_DANGER_PATTERNS: &[&str] = &[
    "rm -rf",
    "rm -fr",
    "rm -r -f",
    "drop database",
    "drop table",
    "truncate table",
    "delete from * where 1=1",
    "mkfs",
    "dd if=* of=/dev/",
    "chmod -r 777 /",
    ":(){ :|:& };:",
    "format c:",
];

pub const DEFAULT_PROFANITY: &[&str] = &["fuck", "fucking", "shit", "bitch", "cunt", "asshole", "bastard", "dickhead"];

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            danger_patterns: DEFAULT_DANGER_PATTERNS.iter().map(|s| s.to_string()).collect(),
            profanity: DEFAULT_PROFANITY.iter().map(|s| s.to_string()).collect(),
            secret_entropy_threshold: 4.5,
            secret_min_length: 20,
            min_mean_token_logprob: libm::log(0.05),
            correctness_timeout_ms: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FilterConfigError {
    NonFiniteThreshold,
    ZeroTimeout,
}

impl core::fmt::Display for FilterConfigError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FilterConfigError::NonFiniteThreshold => f.write_str("entropy threshold must be finite"),
            FilterConfigError::ZeroTimeout => f.write_str("correctness timeout must be positive"),
        }
    }
}

impl core::error::Error for FilterConfigError {}

impl FilterConfig {
    /// The score threshold may be `-inf` (filter disabled) but not NaN.
    pub fn validate(&self) -> Result<(), FilterConfigError> {
        if !self.secret_entropy_threshold.is_finite()
            || self.min_mean_token_logprob.is_nan()
            || self.min_mean_token_logprob == f64::INFINITY
        {
            return Err(FilterConfigError::NonFiniteThreshold);
        }
        if self.correctness_timeout_ms == 0 {
            return Err(FilterConfigError::ZeroTimeout);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VerdictReason {
    Safety,
    LowScore,
    Incorrect,
    TimeoutUndefined,
    Kept,
}

impl VerdictReason {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictReason::Safety => "safety",
            VerdictReason::LowScore => "low_score",
            VerdictReason::Incorrect => "incorrect",
            VerdictReason::TimeoutUndefined => "timeout_undefined",
            VerdictReason::Kept => "kept",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub kept: bool,
    pub reason: VerdictReason,
}

impl Verdict {
    pub const KEPT: Verdict = Verdict { kept: true, reason: VerdictReason::Kept };

    pub fn reject(reason: VerdictReason) -> Verdict {
        Verdict { kept: false, reason }
    }
}

fn wildcard_find(haystack: &str, pattern: &str) -> bool {
    let mut rest = haystack;
    for part in pattern.split('*').filter(|p| !p.is_empty()) {
        match rest.find(part) {
            Some(at) => rest = &rest[at + part.len()..],
            None => return false,
        }
    }
    true
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn contains_word(haystack: &str, word: &str) -> bool {
    if word.is_empty() {
        return false;
    }
    let mut from = 0;
    while let Some(at) = haystack[from..].find(word) {
        let start = from + at;
        let end = start + word.len();
        let before = haystack[..start].chars().next_back();
        let after = haystack[end..].chars().next();
        if !before.is_some_and(is_word_char) && !after.is_some_and(is_word_char) {
            return true;
        }
        from = start + word.chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Shannon entropy in bits per character.
pub fn shannon_entropy(s: &str) -> f64 {
    let mut counts: Vec<(char, usize)> = Vec::new();
    let mut n = 0usize;
    for c in s.chars() {
        n += 1;
        match counts.iter_mut().find(|e| e.0 == c) {
            Some(e) => e.1 += 1,
            None => counts.push((c, 1)),
        }
    }
    if n == 0 {
        return 0.0;
    }
    counts
        .iter()
        .map(|&(_, k)| {
            let p = k as f64 / n as f64;
            -p * libm::log2(p)
        })
        .sum()
}

fn has_secret(text: &str, config: &FilterConfig) -> bool {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|run| run.len() >= config.secret_min_length)
        .any(|run| shannon_entropy(run) >= config.secret_entropy_threshold)
}

fn has_email(text: &str) -> bool {
    let bytes = text.as_bytes();
    for (at, _) in text.match_indices('@') {
        let local = bytes[..at]
            .iter()
            .rev()
            .take_while(|b| b.is_ascii_alphanumeric() || b"._%+-".contains(b))
            .count();
        if local == 0 {
            continue;
        }
        let domain_len = bytes[at + 1..]
            .iter()
            .take_while(|b| b.is_ascii_alphanumeric() || b"-.".contains(b))
            .count();
        let domain = text[at + 1..at + 1 + domain_len].trim_end_matches('.');
        let labels: Vec<&str> = domain.split('.').collect();
        if labels.len() >= 2
            && labels.iter().all(|l| !l.is_empty())
            && labels.last().is_some_and(|tld| tld.len() >= 2 && tld.bytes().all(|b| b.is_ascii_alphabetic()))
        {
            return true;
        }
    }
    false
}

pub fn filter_safety(text: &str, config: &FilterConfig) -> Verdict {
    let lower = text.to_lowercase();
    let dangerous = config.danger_patterns.iter().any(|p| wildcard_find(&lower, &p.to_lowercase()));
    let profane = config.profanity.iter().any(|w| contains_word(&lower, &w.to_lowercase()));
    if dangerous || profane || has_secret(text, config) || has_email(text) {
        Verdict::reject(VerdictReason::Safety)
    } else {
        Verdict::KEPT
    }
}

pub fn low_score_verdict<S>(hypothesis: &Hypothesis<S>, config: &FilterConfig) -> Verdict {
    if hypothesis.mean_log_prob() >= config.min_mean_token_logprob {
        Verdict::KEPT
    } else {
        Verdict::reject(VerdictReason::LowScore)
    }
}

/// Keeps hypotheses whose mean per-token log-probability reaches the threshold.
pub fn filter_low_score<S>(hypotheses: Vec<Hypothesis<S>>, config: &FilterConfig) -> Vec<Hypothesis<S>> {
    hypotheses.into_iter().filter(|h| low_score_verdict(h, config).kept).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Correctness {
    Correct,
    Incorrect,
    Undefined,
}

/// Pluggable correctness predicate over (code before caret, suggestion).
pub trait CorrectnessChecker: Send + Sync {
    fn check(&self, context: &str, suggestion: &str) -> Correctness;
}

impl<F: Fn(&str, &str) -> Correctness + Send + Sync> CorrectnessChecker for F {
    fn check(&self, context: &str, suggestion: &str) -> Correctness {
        self(context, suggestion)
    }
}

/// Rejects suggestions that close a bracket that is not open. Openers left
/// unclosed are fine, they are repaired by [`close_pairs`].
#[derive(Debug, Clone, Copy, Default)]
pub struct BalanceChecker;

impl CorrectnessChecker for BalanceChecker {
    fn check(&self, context: &str, suggestion: &str) -> Correctness {
        let mut scan = Scan::default();
        scan.feed(context);
        let context_broken = scan.broken;
        scan.feed(suggestion);
        if scan.broken && !context_broken {
            Correctness::Incorrect
        } else {
            Correctness::Correct
        }
    }
}

/// Maps a checker outcome, `None` meaning it did not finish in time.
pub fn correctness_verdict(outcome: Option<Correctness>) -> Verdict {
    match outcome {
        Some(Correctness::Correct) => Verdict::KEPT,
        Some(Correctness::Incorrect) => Verdict::reject(VerdictReason::Incorrect),
        Some(Correctness::Undefined) | None => Verdict::reject(VerdictReason::TimeoutUndefined),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Quote {
    ch: u8,
    triple: bool,
}

/// String-aware bracket scanner for Python-like code.
#[derive(Debug, Clone, Default)]
struct Scan {
    stack: Vec<u8>,
    quote: Option<Quote>,
    escaped: bool,
    comment: bool,
    /// A closer did not match.
    broken: bool,
}

fn closer_of(open: u8) -> u8 {
    match open {
        b'(' => b')',
        b'[' => b']',
        _ => b'}',
    }
}

impl Scan {
    fn feed(&mut self, text: &str) {
        let b = text.as_bytes();
        let mut i = 0;
        while i < b.len() {
            let c = b[i];
            if c == b'\n' {
                self.comment = false;
                if self.quote.is_some_and(|q| !q.triple) {
                    self.quote = None;
                }
                self.escaped = false;
                i += 1;
                continue;
            }
            if self.comment {
                i += 1;
                continue;
            }
            if let Some(q) = self.quote {
                if self.escaped {
                    self.escaped = false;
                } else if c == b'\\' {
                    self.escaped = true;
                } else if c == q.ch {
                    if !q.triple {
                        self.quote = None;
                    } else if b[i..].starts_with(&[c, c, c]) {
                        self.quote = None;
                        i += 3;
                        continue;
                    }
                }
                i += 1;
                continue;
            }
            match c {
                b'#' => self.comment = true,
                b'\'' | b'"' => {
                    let triple = b[i..].starts_with(&[c, c, c]);
                    self.quote = Some(Quote { ch: c, triple });
                    if triple {
                        i += 3;
                        continue;
                    }
                }
                b'(' | b'[' | b'{' => self.stack.push(c),
                b')' | b']' | b'}' => match self.stack.pop() {
                    Some(open) if closer_of(open) == c => {}
                    _ => self.broken = true,
                },
                _ => {}
            }
            i += 1;
        }
    }
}

/// Appends the quotes and brackets needed to close what the current line
/// leaves open. Text is returned unchanged when a closer has no matching
/// opener or the suggestion ends in a comment.
pub fn close_pairs(suggestion: &str, line_before_caret: &str) -> String {
    let mut scan = Scan::default();
    scan.feed(line_before_caret);
    if scan.broken {
        return suggestion.to_string();
    }
    scan.feed(suggestion);
    if scan.broken || scan.comment {
        return suggestion.to_string();
    }
    let mut out = String::with_capacity(suggestion.len() + scan.stack.len() + 3);
    out.push_str(suggestion);
    if let Some(q) = scan.quote {
        if scan.escaped {
            return suggestion.to_string();
        }
        let n = if q.triple { 3 } else { 1 };
        for _ in 0..n {
            out.push(q.ch as char);
        }
    }
    for &open in scan.stack.iter().rev() {
        out.push(closer_of(open) as char);
    }
    out
}

/// First non-empty survivor.
pub fn select<'a>(survivors: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    survivors.into_iter().find(|s| !s.is_empty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn hyp(log_prob: f64, len: usize) -> Hypothesis<()> {
        Hypothesis { ids: vec![1; len], log_prob, terminated: true, state: None, text: String::new() }
    }

    #[test]
    fn safety_rows() {
        let c = FilterConfig::default();
        assert_eq!(filter_safety("os.system(\"rm -rf /\")", &c), Verdict::reject(VerdictReason::Safety));
        assert_eq!(filter_safety("cur.execute('drop database prod')", &c).reason, VerdictReason::Safety);
        assert_eq!(filter_safety("x = 1", &c), Verdict::KEPT);
        assert!(!filter_safety("mail = 'admin@example.com'", &c).kept);
        assert!(filter_safety("y = a @ b.T", &c).kept);
        assert!(!filter_safety("msg = 'oh shit'", &c).kept);
        assert!(filter_safety("shitake_count = 3", &c).kept);
    }

    #[test]
    fn wildcard_patterns() {
        assert!(wildcard_find("dd if=/dev/zero of=/dev/sda", "dd if=* of=/dev/"));
        assert!(!wildcard_find("dd if=x", "dd if=* of=/dev/"));
    }

    #[test]
    fn entropy_by_hand() {
        // "aabb": two symbols at p = 1/2 -> 1 bit.
        assert!((shannon_entropy("aabb") - 1.0).abs() < 1e-12);
        assert_eq!(shannon_entropy("aaaa"), 0.0);
        // 40 distinct symbols -> log2(40).
        let key = "aK9xQ2mZ7pL4vR8tY1wE5sD3fG6hJ0kBnCuVoIqX";
        assert_eq!(key.len(), 40);
        assert!((shannon_entropy(key) - libm::log2(40.0)).abs() < 1e-12);
        let c = FilterConfig::default();
        assert!(!filter_safety(&alloc::format!("key = \"{key}\""), &c).kept);
        let flat = "a".repeat(40);
        assert!(filter_safety(&alloc::format!("key = \"{flat}\""), &c).kept);
    }

    #[test]
    fn low_score_rows() {
        let c = FilterConfig::default();
        assert!(filter_low_score(Vec::<Hypothesis<()>>::new(), &c).is_empty());
        let hs = vec![hyp(2.0 * libm::log(0.2), 2), hyp(3.0 * libm::log(0.01), 3)];
        let kept = filter_low_score(hs.clone(), &c);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].ids.len(), 2);
        let open = FilterConfig { min_mean_token_logprob: f64::NEG_INFINITY, ..c };
        assert_eq!(filter_low_score(hs, &open).len(), 2);
    }

    #[test]
    fn correctness_rows() {
        let checker = BalanceChecker;
        assert_eq!(correctness_verdict(Some(checker.check("print(x", "))"))).reason, VerdictReason::Incorrect);
        assert!(correctness_verdict(Some(checker.check("print(x", ")"))).kept);
        assert!(correctness_verdict(Some(checker.check("print(x", ", y"))).kept);
        assert!(correctness_verdict(Some(checker.check("s = '(", "')"))).reason == VerdictReason::Incorrect);
        let undefined = |_: &str, _: &str| Correctness::Undefined;
        assert_eq!(
            correctness_verdict(Some(undefined.check("a", "b"))).reason,
            VerdictReason::TimeoutUndefined
        );
        assert_eq!(correctness_verdict(None).reason, VerdictReason::TimeoutUndefined);
    }

    #[test]
    fn close_pairs_rows() {
        assert_eq!(close_pairs("\"hi\"", "print("), "\"hi\")");
        assert_eq!(close_pairs("f(x)", "y = "), "f(x)");
        assert_eq!(close_pairs("\"a\": [1, 2", "d = {"), "\"a\": [1, 2]}");
        assert_eq!(close_pairs("'abc", "f("), "'abc')");
        assert_eq!(close_pairs("x))", "f("), "x))");
        assert_eq!(close_pairs("\"\"\"doc", ""), "\"\"\"doc\"\"\"");
        assert_eq!(close_pairs("'(' + x", "f("), "'(' + x)");
    }

    #[test]
    fn select_rows() {
        assert_eq!(select(Vec::<&str>::new()), None);
        assert_eq!(select(["first", "second"]), Some("first"));
        assert_eq!(select(["", "second"]), Some("second"));
    }
}
