//! Offline evaluation: caret positions, per-position scores and the report.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::formatter;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EvalPosition {
    pub file_id: String,
    /// Character index of the caret.
    pub offset: usize,
}

/// Character offsets where a completion may be invoked: inside a line,
/// after its indentation and at least one character, before its end.
pub fn eligible_offsets(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split('\n') {
        let chars: Vec<char> = line.trim_end_matches('\r').chars().collect();
        let indent = chars.iter().take_while(|c| **c == ' ' || **c == '\t').count();
        let start = indent + 1;
        for col in start..chars.len() {
            out.push(offset + col);
        }
        offset += line.chars().count() + 1;
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SampledPositions {
    pub positions: Vec<EvalPosition>,
    /// Files without any eligible offset.
    pub skipped: Vec<String>,
}

/// Up to `per_file` distinct offsets per file, drawn uniformly with a seeded
/// generator. Files are visited in id order, so the input order is irrelevant.
pub fn sample_positions<'a>(
    files: impl IntoIterator<Item = (&'a str, &'a str)>,
    per_file: usize,
    seed: u64,
) -> SampledPositions {
    let mut files: Vec<(&str, &str)> = files.into_iter().collect();
    files.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SampledPositions::default();
    for (id, text) in files {
        let eligible = eligible_offsets(text);
        if eligible.is_empty() {
            out.skipped.push(id.to_string());
            continue;
        }
        let n = per_file.max(1).min(eligible.len());
        let mut picked: Vec<usize> =
            rand::seq::index::sample(&mut rng, eligible.len(), n).into_iter().map(|i| eligible[i]).collect();
        picked.sort_unstable();
        out.positions.extend(picked.into_iter().map(|offset| EvalPosition { file_id: id.to_string(), offset }));
    }
    out
}

pub fn format_positions(positions: &[EvalPosition]) -> String {
    let mut s = String::new();
    for p in positions {
        let _ = writeln!(s, "{}\t{}", p.file_id, p.offset);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositionsParseError {
    pub line: usize,
}

impl core::fmt::Display for PositionsParseError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "malformed position on line {}", self.line)
    }
}

impl core::error::Error for PositionsParseError {}

pub fn parse_positions(text: &str) -> Result<Vec<EvalPosition>, PositionsParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (id, offset) = line.rsplit_once('\t').ok_or(PositionsParseError { line: i + 1 })?;
        let offset = offset.parse().map_err(|_| PositionsParseError { line: i + 1 })?;
        out.push(EvalPosition { file_id: id.to_string(), offset });
    }
    Ok(out)
}

/// Text before the caret and the true rest of its line, both as characters
/// of `text`. `None` when the offset is past the end.
pub fn split_at_caret(text: &str, offset: usize) -> Option<(&str, &str)> {
    let byte = if offset == text.chars().count() {
        text.len()
    } else {
        text.char_indices().nth(offset)?.0
    };
    let before = &text[..byte];
    let rest = &text[byte..];
    let line_rest = rest.split('\n').next().unwrap_or("");
    Some((before, line_rest.trim_end_matches('\r')))
}

/// Ground truth for a caret: the rest of the line with comments and
/// trailing whitespace removed, `None` when nothing remains.
pub fn ground_truth(line_before_caret: &str, line_rest: &str) -> Option<String> {
    let mut line = String::with_capacity(line_before_caret.len() + line_rest.len());
    line.push_str(line_before_caret);
    line.push_str(line_rest);
    let normalized = formatter::normalize(&line);
    let normalized = normalized.trim_end_matches('\n');
    let truth = normalized.get(line_before_caret.len()..)?;
    let truth = truth.trim_end();
    if truth.is_empty() || !normalized.starts_with(line_before_caret) {
        None
    } else {
        Some(truth.to_string())
    }
}

fn common_prefix_chars(a: &str, b: &str) -> usize {
    a.chars().zip(b.chars()).take_while(|(x, y)| x == y).count()
}

/// Characters of the common prefix over the truth length, after trimming
/// trailing whitespace on both sides.
pub fn matched_ratio(suggestion: &str, truth: &str) -> f64 {
    let s = suggestion.trim_end();
    let t = truth.trim_end();
    common_prefix_chars(s, t) as f64 / t.chars().count().max(1) as f64
}

pub fn perfect_line(suggestion: &str, truth: &str) -> bool {
    suggestion.trim_end() == truth.trim_end()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub file_id: String,
    pub offset: usize,
    pub truth: String,
    pub suggestion: Option<String>,
    pub latency_ms: f64,
    pub cache_hit: bool,
    pub error: Option<String>,
}

impl EvalRecord {
    pub fn matched_ratio(&self) -> Option<f64> {
        self.suggestion.as_deref().map(|s| matched_ratio(s, &self.truth))
    }

    pub fn perfect(&self) -> bool {
        self.suggestion.as_deref().is_some_and(|s| perfect_line(s, &self.truth))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub positions_total: usize,
    pub suggestions_shown: usize,
    /// Mean over positions with a suggestion.
    pub matched_ratio: f64,
    /// Fraction of positions with a suggestion that match the truth exactly.
    pub perfect_lines: f64,
    pub shown_rate: f64,
    pub latency_p50_ms: f64,
    pub latency_p90_ms: f64,
    pub cache_hit_rate: f64,
}

/// Nearest-rank percentile of unsorted values, 0 when empty.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = libm::ceil(p / 100.0 * sorted.len() as f64) as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl EvalReport {
    pub fn from_records(records: &[EvalRecord]) -> EvalReport {
        let total = records.len();
        let shown: Vec<&EvalRecord> = records.iter().filter(|r| r.suggestion.is_some()).collect();
        let n = shown.len();
        let ratio_sum: f64 = shown.iter().filter_map(|r| r.matched_ratio()).sum();
        let perfect = shown.iter().filter(|r| r.perfect()).count();
        let latencies: Vec<f64> = records.iter().map(|r| r.latency_ms).collect();
        let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        EvalReport {
            positions_total: total,
            suggestions_shown: n,
            matched_ratio: if n == 0 { 0.0 } else { ratio_sum / n as f64 },
            perfect_lines: frac(perfect, n),
            shown_rate: frac(n, total),
            latency_p50_ms: percentile(&latencies, 50.0),
            latency_p90_ms: percentile(&latencies, 90.0),
            cache_hit_rate: frac(records.iter().filter(|r| r.cache_hit).count(), total),
        }
    }
}

/// Distinct file ids referenced by a position list.
pub fn position_files(positions: &[EvalPosition]) -> BTreeSet<&str> {
    positions.iter().map(|p| p.file_id.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn one_line_file_offsets() {
        assert_eq!(eligible_offsets("x = 1"), vec![1, 2, 3, 4]);
        let s = sample_positions([("a.py", "x = 1")], 1, 7);
        assert_eq!(s.positions.len(), 1);
        assert!((1..=4).contains(&s.positions[0].offset));
    }

    #[test]
    fn indentation_and_empty_files() {
        assert_eq!(eligible_offsets("if a:\n  b()\n"), vec![1, 2, 3, 4, 9, 10]);
        let s = sample_positions([("e.py", ""), ("f.py", "\n\n")], 3, 1);
        assert!(s.positions.is_empty());
        assert_eq!(s.skipped, vec!["e.py".to_string(), "f.py".to_string()]);
    }

    #[test]
    fn sampling_is_reproducible() {
        let files = [("b.py", "def f(x):\n    return x + 1\n"), ("a.py", "import os\nprint(os.sep)\n")];
        let a = format_positions(&sample_positions(files, 3, 42).positions);
        let b = format_positions(&sample_positions([files[1], files[0]], 3, 42).positions);
        assert_eq!(a, b);
        assert_eq!(parse_positions(&a).map(|p| format_positions(&p)), Ok(a.clone()));
        assert_ne!(a, format_positions(&sample_positions(files, 3, 43).positions));
    }

    #[test]
    fn ratio_rows() {
        assert_eq!(matched_ratio("abc", "abc"), 1.0);
        assert_eq!(matched_ratio("for j", "for i in range(10):"), 4.0 / 19.0);
        assert!(perfect_line("x = 1", "x = 1  "));
        assert!(!perfect_line("x = 1", "x = 2"));
    }

    #[test]
    fn truth_extraction() {
        assert_eq!(ground_truth("x = ", "f(1)  # note"), Some("f(1)".to_string()));
        assert_eq!(ground_truth("x = 1", "   "), None);
        assert_eq!(ground_truth("s = '#", " x'"), Some(" x'".to_string()));
        let text = "ab\ncd\n";
        assert_eq!(split_at_caret(text, 4), Some(("ab\nc", "d")));
        assert_eq!(split_at_caret(text, 6), Some(("ab\ncd\n", "")));
        assert_eq!(split_at_caret(text, 7), None);
    }

    fn record(truth: &str, suggestion: Option<&str>, latency: f64) -> EvalRecord {
        EvalRecord {
            file_id: "f".into(),
            offset: 1,
            truth: truth.into(),
            suggestion: suggestion.map(Into::into),
            latency_ms: latency,
            cache_hit: false,
            error: None,
        }
    }

    #[test]
    fn report_rows() {
        let none = [record("abc", None, 1.0), record("xyz", None, 3.0)];
        let r = EvalReport::from_records(&none);
        assert_eq!((r.suggestions_shown, r.matched_ratio, r.perfect_lines), (0, 0.0, 0.0));
        let oracle = [record("abc", Some("abc"), 1.0), record("xyz", Some("xyz"), 2.0)];
        let r = EvalReport::from_records(&oracle);
        assert_eq!((r.matched_ratio, r.perfect_lines, r.shown_rate), (1.0, 1.0, 1.0));
        let mixed = [record("abcd", Some("ab"), 1.0), record("xy", Some("xy"), 5.0), record("q", None, 9.0)];
        let r = EvalReport::from_records(&mixed);
        assert_eq!(r.matched_ratio, 0.75);
        assert_eq!(r.perfect_lines, 0.5);
        assert_eq!(r.latency_p50_ms, 5.0);
        assert_eq!(r.latency_p90_ms, 9.0);
    }
}
