//! Source normalization shared by training and inference.
//!
//! Python `#` comments are removed with string-literal awareness, empty lines
//! and trailing whitespace are dropped, and leading indentation is replaced by
//! [`SCOPE_IN`]/[`SCOPE_OUT`] markers so that the vocabulary never sees
//! indentation variants of the same token.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::markers::{self, LANG_SEP, META_SEP, SCOPE_IN, SCOPE_OUT};
use crate::tokenizer::Tokenizer;
use crate::TokenId;

/// Default model context length in tokens.
pub const DEFAULT_MAX_CONTEXT: usize = 1536;

#[derive(Debug, Clone, PartialEq)]
pub struct FormatterConfig {
    pub language: String,
    pub import_dropout_p: f64,
    pub lang_sep: &'static str,
    pub meta_sep: &'static str,
}

impl Default for FormatterConfig {
    fn default() -> Self {
        FormatterConfig {
            language: "python".to_string(),
            import_dropout_p: 0.5,
            lang_sep: LANG_SEP,
            meta_sep: META_SEP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormatError {
    /// Indentation is not a whole number of indentation units (1-based line).
    Indentation { line: usize },
    /// A `SCOPE_OUT` marker closed a scope that was never opened.
    NegativeDepth { line: usize },
    /// The header alone does not fit into the context budget.
    HeaderTooLong { header_tokens: usize, max_tokens: usize },
    UnsupportedLanguage(String),
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatError::Indentation { line } => {
                write!(f, "line {line}: indentation is not a multiple of the indentation unit")
            }
            FormatError::NegativeDepth { line } => write!(f, "line {line}: scope depth below zero"),
            FormatError::HeaderTooLong { header_tokens, max_tokens } => write!(
                f,
                "context header needs {header_tokens} tokens but only {max_tokens} are allowed"
            ),
            FormatError::UnsupportedLanguage(lang) => write!(f, "unsupported language `{lang}`"),
        }
    }
}

impl core::error::Error for FormatError {}

#[derive(Clone, Copy)]
struct OpenString {
    quote: char,
    triple: bool,
}

/// Returns the line with its `#` comment cut off, threading string state
/// across lines so triple-quoted literals are respected.
fn strip_comment<'a>(line: &'a str, state: &mut Option<OpenString>) -> &'a str {
    let bytes = line.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match *state {
            Some(open) => {
                if c == b'\\' {
                    i += 2;
                    continue;
                }
                let q = open.quote as u8;
                if c == q {
                    if !open.triple {
                        *state = None;
                    } else if bytes[i..].starts_with(&[q, q, q]) {
                        *state = None;
                        i += 3;
                        continue;
                    }
                }
                i += 1;
            }
            None => {
                if c == b'#' {
                    return &line[..i];
                }
                if c == b'"' || c == b'\'' {
                    let triple = bytes[i..].starts_with(&[c, c, c]);
                    *state = Some(OpenString { quote: c as char, triple });
                    i += if triple { 3 } else { 1 };
                    continue;
                }
                i += 1;
            }
        }
    }
    // An unterminated single-quoted string ends with its line.
    if matches!(state, Some(OpenString { triple: false, .. })) {
        *state = None;
    }
    line
}

/// Removes comments, empty lines and trailing whitespace.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut state = None;
    for line in text.split('\n') {
        let kept = strip_comment(line, &mut state).trim_end();
        if kept.is_empty() {
            continue;
        }
        out.push_str(kept);
        out.push('\n');
    }
    out
}

/// Checks a configured language against what [`normalize`] understands.
pub fn check_language(config: &FormatterConfig) -> Result<(), FormatError> {
    match config.language.as_str() {
        "python" => Ok(()),
        other => Err(FormatError::UnsupportedLanguage(other.to_string())),
    }
}

/// Whether a line before the caret ends inside a `#` comment.
pub fn ends_in_comment(line: &str) -> bool {
    let mut state = None;
    strip_comment(line, &mut state).len() != line.len()
}

/// How one level of indentation is written in a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndentUnit {
    Tab,
    Spaces(usize),
}

impl IndentUnit {
    pub fn as_str(self) -> String {
        match self {
            IndentUnit::Tab => "\t".to_string(),
            IndentUnit::Spaces(n) => " ".repeat(n),
        }
    }
}

impl Default for IndentUnit {
    fn default() -> Self {
        IndentUnit::Spaces(4)
    }
}

/// Text in scope-marker form plus the unit needed to restore it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScopedText {
    pub text: String,
    pub indent_unit: IndentUnit,
}

fn leading_whitespace(line: &str) -> (usize, usize, usize) {
    let mut tabs = 0;
    let mut spaces = 0;
    let mut len = 0;
    for c in line.chars() {
        match c {
            '\t' => tabs += 1,
            ' ' => spaces += 1,
            _ => break,
        }
        len += 1;
    }
    (tabs, spaces, len)
}

fn infer_unit(text: &str) -> IndentUnit {
    for line in text.split('\n') {
        let (_, spaces, len) = leading_whitespace(line);
        if len == 0 || len == line.len() {
            continue;
        }
        if line.starts_with('\t') || spaces == 0 {
            return IndentUnit::Tab;
        }
        return IndentUnit::Spaces(spaces);
    }
    IndentUnit::default()
}

fn push_markers(out: &mut String, from: usize, to: usize) {
    if to > from {
        for _ in from..to {
            out.push_str(SCOPE_IN);
        }
    } else {
        for _ in to..from {
            out.push_str(SCOPE_OUT);
        }
    }
}

fn encode_with(text: &str, strict: bool) -> Result<ScopedText, FormatError> {
    let unit = infer_unit(text);
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    let mut lines = text.split('\n').enumerate().peekable();
    while let Some((i, line)) = lines.next() {
        let (tabs, spaces, len) = leading_whitespace(line);
        let level = match unit {
            IndentUnit::Tab if spaces == 0 => Some(tabs),
            IndentUnit::Spaces(w) if tabs == 0 && spaces % w == 0 => Some(spaces / w),
            _ => None,
        };
        let level = match (level, strict) {
            (Some(l), _) => l,
            (None, true) => return Err(FormatError::Indentation { line: i + 1 }),
            (None, false) => match unit {
                IndentUnit::Tab => tabs,
                IndentUnit::Spaces(w) => tabs + spaces / w,
            },
        };
        let body = &line[len..];
        let last = lines.peek().is_none();
        // The final fragment after the last newline is only a line when non-empty.
        if last && line.is_empty() {
            break;
        }
        push_markers(&mut out, depth, level);
        depth = level;
        out.push_str(body);
        if !last {
            out.push('\n');
        }
    }
    Ok(ScopedText { text: out, indent_unit: unit })
}

/// Replaces leading indentation by scope markers, one per level changed.
///
/// The unit is the first indentation observed in the file. Lines whose
/// indentation is not a whole number of units, or that mix tabs into a
/// space-indented file (or the reverse), are rejected.
pub fn encode_scopes(text: &str) -> Result<ScopedText, FormatError> {
    encode_with(text, true)
}

/// Like [`encode_scopes`] but never fails: a tab counts as one level and
/// leftover spaces are rounded down. Used on live editor buffers and training files,
/// which may contain hanging indents.
pub fn encode_scopes_lenient(text: &str) -> ScopedText {
    encode_with(text, false).expect("lenient encoding cannot fail")
}

/// Splits leading scope markers off a scoped line: `(net depth change, body)`.
pub fn split_scope_prefix(line: &str) -> (isize, &str) {
    let mut delta = 0isize;
    let mut rest = line;
    loop {
        if let Some(r) = rest.strip_prefix(SCOPE_IN) {
            delta += 1;
            rest = r;
        } else if let Some(r) = rest.strip_prefix(SCOPE_OUT) {
            delta -= 1;
            rest = r;
        } else {
            return (delta, rest);
        }
    }
}

/// Restores indentation from scope markers.
pub fn decode_scopes(scoped: &str, unit: IndentUnit) -> Result<String, FormatError> {
    let unit = unit.as_str();
    let mut out = String::with_capacity(scoped.len());
    let mut depth = 0isize;
    for (i, line) in scoped.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let (delta, body) = split_scope_prefix(line);
        depth += delta;
        if depth < 0 {
            return Err(FormatError::NegativeDepth { line: i + 1 });
        }
        if !body.is_empty() {
            for _ in 0..depth {
                out.push_str(&unit);
            }
        }
        out.push_str(body);
    }
    Ok(out)
}

fn is_import(line: &str) -> bool {
    line.starts_with("import ") || line.starts_with("from ")
}

fn paren_balance(line: &str) -> isize {
    let mut state = None;
    let code = strip_comment(line, &mut state);
    let mut balance = 0;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for c in code.chars() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => quote = Some(c),
            '(' => balance += 1,
            ')' => balance -= 1,
            _ => {}
        }
    }
    balance
}

/// Drops each top-level import statement with probability `p`.
///
/// A parenthesized import that continues over several lines is dropped as a
/// whole.
pub fn import_dropout(text: &str, p: f64, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::with_capacity(text.len());
    let mut lines = text.split_inclusive('\n');
    while let Some(line) = lines.next() {
        if !is_import(line) {
            out.push_str(line);
            continue;
        }
        let drop = rng.gen::<f64>() < p;
        let mut statement = String::from(line);
        let mut open = paren_balance(line);
        while open > 0 {
            match lines.next() {
                Some(next) => {
                    open += paren_balance(next);
                    statement.push_str(next);
                }
                None => break,
            }
        }
        if !drop {
            out.push_str(&statement);
        }
    }
    out
}

/// Scoped code split into lines with absolute depths and pre-encoded bodies.
///
/// Because newline is always a standalone token and markers are specials,
/// encoding line by line gives exactly the encoding of the whole text.
#[derive(Debug, Clone, Default)]
pub struct CodeLines {
    /// Absolute scope depth of each line.
    pub depths: Vec<usize>,
    /// Net marker delta written at the start of each line.
    pub deltas: Vec<isize>,
    /// Token ids of each line body (without markers or newline).
    pub bodies: Vec<Vec<TokenId>>,
}

impl CodeLines {
    pub fn new(scoped_code: &str, tokenizer: &Tokenizer) -> Self {
        let mut lines = CodeLines::default();
        let mut depth = 0isize;
        for line in scoped_code.split('\n') {
            let (delta, body) = split_scope_prefix(line);
            depth = (depth + delta).max(0);
            lines.depths.push(depth as usize);
            lines.deltas.push(delta);
            lines.bodies.push(tokenizer.encode(body));
        }
        lines
    }

    pub fn len(&self) -> usize {
        self.bodies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bodies.is_empty()
    }

    fn marker_ids(delta: isize, out: &mut Vec<TokenId>) {
        let id = if delta > 0 { markers::SCOPE_IN_ID } else { markers::SCOPE_OUT_ID };
        out.extend(core::iter::repeat(id).take(delta.unsigned_abs()));
    }

    /// Token count of the code starting at line `start`.
    pub fn len_from(&self, start: usize) -> usize {
        let mut n = self.depths[start];
        for i in start..self.len() {
            if i > start {
                n += self.deltas[i].unsigned_abs() + 1;
            }
            n += self.bodies[i].len();
        }
        n
    }

    /// Code ids from line `start`, with the first line's depth written as a
    /// run of `SCOPE_IN` markers.
    pub fn ids_from(&self, start: usize, out: &mut Vec<TokenId>) {
        Self::marker_ids(self.depths[start] as isize, out);
        for i in start..self.len() {
            if i > start {
                out.push(markers::NEWLINE_ID);
                Self::marker_ids(self.deltas[i], out);
            }
            out.extend_from_slice(&self.bodies[i]);
        }
    }
}

/// Model input: header followed by (possibly left-truncated) code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComposedContext {
    pub ids: Vec<TokenId>,
    pub header_len: usize,
    /// Index of the first code line kept.
    pub first_line: usize,
    /// True when even the last line had to be cut from the left.
    pub cut_inside_line: bool,
}

/// `extension LANG_SEP path META_SEP` as text.
pub fn header_text(extension: &str, path: &str) -> String {
    let mut header = String::with_capacity(extension.len() + path.len() + 16);
    header.push_str(extension);
    header.push_str(LANG_SEP);
    header.push_str(path);
    header.push_str(META_SEP);
    header
}

/// Training text of one file: header, then the normalized code with imports
/// dropped at rate `dropout_p` and indentation turned into scope markers.
pub fn training_document(extension: &str, path: &str, text: &str, dropout_p: f64, seed: u64) -> String {
    let mut code = normalize(text);
    if dropout_p > 0.0 {
        code = import_dropout(&code, dropout_p, seed);
    }
    let mut doc = header_text(extension, path);
    doc.push_str(&encode_scopes_lenient(&code).text);
    doc
}

/// Tokens of `extension LANG_SEP path META_SEP`.
pub fn header_ids(extension: &str, path: &str, tokenizer: &Tokenizer) -> Vec<TokenId> {
    tokenizer.encode(&header_text(extension, path))
}

/// Header plus the code above the caret, dropping the oldest lines until the
/// whole sequence fits into `max_tokens`.
pub fn compose_context(
    extension: &str,
    path: &str,
    scoped_code_before_caret: &str,
    tokenizer: &Tokenizer,
    max_tokens: usize,
) -> Result<ComposedContext, FormatError> {
    let header = header_ids(extension, path, tokenizer);
    let lines = CodeLines::new(scoped_code_before_caret, tokenizer);
    compose_lines(header, &lines, max_tokens)
}

/// [`compose_context`] over pre-encoded lines.
pub fn compose_lines(
    header: Vec<TokenId>,
    lines: &CodeLines,
    max_tokens: usize,
) -> Result<ComposedContext, FormatError> {
    if header.len() + 1 > max_tokens {
        return Err(FormatError::HeaderTooLong { header_tokens: header.len(), max_tokens });
    }
    let budget = max_tokens - header.len();
    let header_len = header.len();
    let mut ids = header;
    if lines.is_empty() {
        return Ok(ComposedContext { ids, header_len, first_line: 0, cut_inside_line: false });
    }
    // Walk backwards accumulating line costs; the first line's cost includes
    // its synthesized depth markers instead of its delta markers.
    let last = lines.len() - 1;
    let mut tail = lines.bodies[last].len();
    let mut start = last;
    if tail + lines.depths[last] <= budget {
        while start > 0 {
            let candidate = start - 1;
            let grown = tail + 1 + lines.deltas[start].unsigned_abs() + lines.bodies[candidate].len();
            if grown + lines.depths[candidate] > budget {
                break;
            }
            tail = grown;
            start = candidate;
        }
        debug_assert_eq!(tail + lines.depths[start], lines.len_from(start));
        lines.ids_from(start, &mut ids);
        return Ok(ComposedContext { ids, header_len, first_line: start, cut_inside_line: false });
    }
    let mut code = Vec::new();
    lines.ids_from(last, &mut code);
    ids.extend_from_slice(&code[code.len() - budget..]);
    Ok(ComposedContext { ids, header_len, first_line: last, cut_inside_line: true })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::format;

    #[test]
    fn comment_and_empty_line_removed() {
        assert_eq!(normalize("x = 1  # note\n\n"), "x = 1\n");
    }

    #[test]
    fn hash_inside_string_is_kept() {
        let s = "s = '# not a comment'\n";
        assert_eq!(normalize(s), s);
        assert_eq!(normalize("s = \"a#b\"  # real\n"), "s = \"a#b\"\n");
        assert_eq!(normalize("s = 'it\\'s # in'\n"), "s = 'it\\'s # in'\n");
    }

    #[test]
    fn triple_quoted_strings_span_lines() {
        let src = "x = \"\"\"\n# inside\n\"\"\"  # outside\ny = 2 # c\n";
        assert_eq!(normalize(src), "x = \"\"\"\n# inside\n\"\"\"\ny = 2\n");
    }

    #[test]
    fn unterminated_string_ends_at_line_end() {
        assert_eq!(normalize("s = 'abc\nx = 1 # c\n"), "s = 'abc\nx = 1\n");
    }

    #[test]
    fn trailing_whitespace_removed_indent_kept() {
        assert_eq!(normalize("def f():   \n    pass\n"), "def f():\n    pass\n");
        assert_eq!(normalize("a\r\nb\r\n"), "a\nb\n");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("   \n\t\n# only\n"), "");
    }

    #[test]
    fn comment_detection_at_caret() {
        assert!(ends_in_comment("x = 1  # no"));
        assert!(!ends_in_comment("x = '#'"));
    }

    #[test]
    fn scopes_for_simple_block() {
        let scoped = encode_scopes("if x:\n    y\nz\n").unwrap();
        assert_eq!(scoped.text, format!("if x:\n{SCOPE_IN}y\n{SCOPE_OUT}z\n"));
        assert_eq!(scoped.indent_unit, IndentUnit::Spaces(4));
        assert_eq!(encode_scopes("a\n").unwrap().text, "a\n");
    }

    #[test]
    fn two_level_dedent() {
        let scoped = encode_scopes("a:\n  b:\n    c\nd\n").unwrap();
        assert_eq!(scoped.indent_unit, IndentUnit::Spaces(2));
        assert_eq!(
            scoped.text,
            format!("a:\n{SCOPE_IN}b:\n{SCOPE_IN}c\n{SCOPE_OUT}{SCOPE_OUT}d\n")
        );
    }

    #[test]
    fn tabs_are_one_unit() {
        let scoped = encode_scopes("a:\n\tb:\n\t\tc\n").unwrap();
        assert_eq!(scoped.indent_unit, IndentUnit::Tab);
        assert_eq!(decode_scopes(&scoped.text, scoped.indent_unit).unwrap(), "a:\n\tb:\n\t\tc\n");
    }

    #[test]
    fn inconsistent_indent_is_an_error() {
        assert_eq!(
            encode_scopes("a:\n    b\n      c\n"),
            Err(FormatError::Indentation { line: 3 })
        );
        let lenient = encode_scopes_lenient("a:\n    b\n      c\n");
        assert_eq!(lenient.text, format!("a:\n{SCOPE_IN}b\nc\n"));
    }

    #[test]
    fn partial_last_line_is_kept() {
        let scoped = encode_scopes_lenient("if x:\n    fo");
        assert_eq!(scoped.text, format!("if x:\n{SCOPE_IN}fo"));
        let scoped = encode_scopes_lenient("if x:\n    ");
        assert_eq!(scoped.text, format!("if x:\n{SCOPE_IN}"));
    }

    #[test]
    fn decode_round_trip_and_errors() {
        let src = "if x:\n    y\nz\n";
        let scoped = encode_scopes(src).unwrap();
        assert_eq!(decode_scopes(&scoped.text, scoped.indent_unit).unwrap(), src);
        assert_eq!(decode_scopes("a\nb\n", IndentUnit::default()).unwrap(), "a\nb\n");
        assert_eq!(
            decode_scopes(&format!("{SCOPE_OUT}a\n"), IndentUnit::default()),
            Err(FormatError::NegativeDepth { line: 1 })
        );
    }

    #[test]
    fn dropout_extremes() {
        let src = "import os\nfrom a import b\nx = 1\ndef f():\n    import sys\n";
        assert_eq!(import_dropout(src, 0.0, 7), src);
        assert_eq!(import_dropout(src, 1.0, 7), "x = 1\ndef f():\n    import sys\n");
    }

    #[test]
    fn dropout_removes_parenthesized_imports_whole() {
        let src = "from a import (\n    b,\n    c)\nx = 1\n";
        assert_eq!(import_dropout(src, 1.0, 1), "x = 1\n");
        assert_eq!(import_dropout(src, 0.0, 1), src);
    }

    #[test]
    fn dropout_frequency_near_half() {
        let src: String = (0..1000).map(|i| format!("import m{i}\n")).collect();
        let kept = import_dropout(&src, 0.5, 42).lines().count();
        let removed = (1000 - kept) as f64 / 1000.0;
        assert!((removed - 0.5).abs() <= 0.05, "removed fraction {removed}");
        assert_eq!(import_dropout(&src, 0.5, 42), import_dropout(&src, 0.5, 42));
    }

    #[test]
    fn language_check() {
        assert!(check_language(&FormatterConfig::default()).is_ok());
        let cfg = FormatterConfig { language: "cobol".into(), ..FormatterConfig::default() };
        assert!(check_language(&cfg).is_err());
    }
}
