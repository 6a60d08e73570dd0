//! Character-pair encoding for source code.
//!
//! BPE over characters rather than bytes. Merges may span spaces and tabs but
//! never a newline, never touch a special token, and never produce a token
//! that starts with whitespace, so no two tokens differ only by leading
//! whitespace. With `ascii_only` every non-ASCII run collapses into a single
//! `UNK`.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Reverse;
use core::fmt;
use core::fmt::Write as _;

use hashbrown::{HashMap, HashSet};

use crate::markers::{self, marker_at, NEWLINE_ID, SPECIALS, UNK_ID};
use crate::substring::ReverseSubstringIndex;
use crate::TokenId;

pub const DEFAULT_VOCAB_SIZE: usize = 16384;
const ARTIFACT_MAGIC: &str = "CPE-TOKENIZER v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizerConfig {
    pub vocab_size: usize,
    pub ascii_only: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig { vocab_size: DEFAULT_VOCAB_SIZE, ascii_only: true }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenizerError {
    EmptyCorpus,
    VocabTooSmall { requested: usize, minimum: usize },
    OutOfRange(TokenId),
    Artifact { line: usize, message: String },
}

impl fmt::Display for TokenizerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenizerError::EmptyCorpus => write!(f, "cannot train a tokenizer on an empty corpus"),
            TokenizerError::VocabTooSmall { requested, minimum } => {
                write!(f, "vocabulary size {requested} is below the {minimum} base symbols")
            }
            TokenizerError::OutOfRange(id) => write!(f, "token id {id} is outside the vocabulary"),
            TokenizerError::Artifact { line, message } => {
                write!(f, "tokenizer artifact line {line}: {message}")
            }
        }
    }
}

impl core::error::Error for TokenizerError {}

fn ascii_alphabet() -> impl Iterator<Item = char> {
    core::iter::once('\t').chain(' '..='~')
}

#[cfg(test)]
fn is_whitespace_token(s: &str) -> bool {
    s.starts_with(' ') || s.starts_with('\t')
}

/// Token strings indexed by id. Ids `0..6` are the specials in
/// [`markers::SPECIALS`] order.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    ascii_ids: [Option<TokenId>; 128],
    other_ids: HashMap<char, TokenId>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self, String> {
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(format!("token {i} must be the special `{}`", s.escape_default()));
            }
        }
        let mut vocab = Vocabulary {
            tokens: Vec::with_capacity(tokens.len()),
            index: HashMap::with_capacity(tokens.len()),
            ascii_ids: [None; 128],
            other_ids: HashMap::new(),
        };
        for t in tokens {
            if t.is_empty() {
                return Err("empty token".to_string());
            }
            if vocab.index.contains_key(&t) {
                return Err(format!("duplicate token `{}`", t.escape_default()));
            }
            vocab.push(t);
        }
        Ok(vocab)
    }

    fn push(&mut self, token: String) -> TokenId {
        let id = self.tokens.len() as TokenId;
        if !markers::is_special(id) {
            let mut chars = token.chars();
            if let (Some(c), None) = (chars.next(), chars.next()) {
                if c.is_ascii() {
                    self.ascii_ids[c as usize] = Some(id);
                } else {
                    self.other_ids.insert(c, id);
                }
            }
        }
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Id of a single-character base symbol.
    pub fn char_id(&self, c: char) -> Option<TokenId> {
        if c.is_ascii() {
            self.ascii_ids[c as usize]
        } else {
            self.other_ids.get(&c).copied()
        }
    }
}

/// Ordered merge rules; a rule's rank is its position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MergeTable {
    pairs: Vec<(TokenId, TokenId)>,
    ranks: HashMap<(TokenId, TokenId), (u32, TokenId)>,
}

impl MergeTable {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(TokenId, TokenId)] {
        &self.pairs
    }

    /// `(rank, merged id)` for an adjacent pair.
    pub fn get(&self, left: TokenId, right: TokenId) -> Option<(u32, TokenId)> {
        self.ranks.get(&(left, right)).copied()
    }

    fn push(&mut self, left: TokenId, right: TokenId, merged: TokenId) {
        let rank = self.pairs.len() as u32;
        self.pairs.push((left, right));
        self.ranks.insert((left, right), (rank, merged));
    }
}

/// Splits text into specials and runs of base symbols. Runs of characters
/// that are neither collapse into one `UNK`.
fn for_each_piece<'a>(
    text: &'a str,
    is_base: impl Fn(char) -> bool,
    mut emit: impl FnMut(Piece<'a>),
) {
    let mut run_start: Option<usize> = None;
    let mut in_unk = false;
    let mut iter = text.char_indices();
    while let Some((i, c)) = iter.next() {
        let special = if c == '\n' {
            Some((1, NEWLINE_ID))
        } else {
            marker_at(&text[i..]).map(|(m, id)| (m.len(), id))
        };
        if let Some((len, id)) = special {
            if let Some(s) = run_start.take() {
                emit(Piece::Text(&text[s..i]));
            }
            in_unk = false;
            emit(Piece::Special(id));
            // Skip the rest of a multi-byte marker.
            let end = i + len;
            while iter.as_str().len() > text.len() - end {
                iter.next();
            }
            continue;
        }
        if is_base(c) {
            in_unk = false;
            run_start.get_or_insert(i);
        } else {
            if let Some(s) = run_start.take() {
                emit(Piece::Text(&text[s..i]));
            }
            if !in_unk {
                emit(Piece::Special(UNK_ID));
                in_unk = true;
            }
        }
    }
    if let Some(s) = run_start {
        emit(Piece::Text(&text[s..]));
    }
}

enum Piece<'a> {
    Special(TokenId),
    Text(&'a str),
}

/// Outcome of training beyond the artifacts themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainReport {
    pub merges: usize,
    /// True when training stopped because no pair occurred twice.
    pub exhausted: bool,
}

#[derive(Debug, Clone)]
pub struct Tokenizer {
    vocab: Vocabulary,
    merges: MergeTable,
    healing: ReverseSubstringIndex,
}

impl PartialEq for Tokenizer {
    fn eq(&self, other: &Self) -> bool {
        self.vocab == other.vocab && self.merges == other.merges
    }
}

impl Tokenizer {
    fn from_parts(vocab: Vocabulary, merges: MergeTable) -> Self {
        let healing = ReverseSubstringIndex::new(
            vocab.tokens.iter().skip(SPECIALS.len()).map(String::as_str),
        );
        Tokenizer { vocab, merges, healing }
    }

    /// Tokenizer with only the base alphabet and no merges.
    pub fn base() -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(ascii_alphabet().map(|c| c.to_string()));
        Self::from_parts(Vocabulary::from_tokens(tokens).unwrap(), MergeTable::default())
    }

    /// Number of specials plus base symbols for a corpus.
    pub fn base_size() -> usize {
        SPECIALS.len() + ascii_alphabet().count()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn merges(&self) -> &MergeTable {
        &self.merges
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn is_base(&self, c: char) -> bool {
        self.vocab.char_id(c).is_some()
    }

    /// Greedy most-frequent-pair merging until `vocab_size` tokens exist or
    /// no eligible pair occurs at least twice. Ties go to the smallest
    /// `(left id, right id)`.
    pub fn train<'a>(
        corpus: impl IntoIterator<Item = &'a str>,
        config: &TokenizerConfig,
    ) -> Result<(Tokenizer, TrainReport), TokenizerError> {
        let texts: Vec<&str> = corpus.into_iter().collect();
        if texts.iter().all(|t| t.is_empty()) {
            return Err(TokenizerError::EmptyCorpus);
        }

        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(ascii_alphabet().map(|c| c.to_string()));
        if !config.ascii_only {
            let mut extra: Vec<char> = texts
                .iter()
                .flat_map(|t| t.chars())
                .filter(|c| !c.is_ascii() && !c.is_control() && *c != '\u{27e6}' && *c != '\u{27e7}')
                .collect::<HashSet<char>>()
                .into_iter()
                .collect();
            extra.sort_unstable();
            tokens.extend(extra.into_iter().map(|c| c.to_string()));
        }
        let minimum = tokens.len();
        if config.vocab_size < minimum {
            return Err(TokenizerError::VocabTooSmall { requested: config.vocab_size, minimum });
        }
        let mut vocab = Vocabulary::from_tokens(tokens).expect("base alphabet is well formed");

        let mut word_counts: HashMap<&str, u64> = HashMap::new();
        for text in &texts {
            for_each_piece(text, |c| vocab.char_id(c).is_some(), |piece| {
                if let Piece::Text(s) = piece {
                    if s.len() > 1 {
                        *word_counts.entry(s).or_default() += 1;
                    }
                }
            });
        }
        let mut sorted_words: Vec<(&str, u64)> = word_counts.into_iter().collect();
        sorted_words.sort_unstable();
        let mut words: Vec<(Vec<TokenId>, u64)> = sorted_words
            .into_iter()
            .map(|(w, n)| (w.chars().map(|c| vocab.char_id(c).unwrap()).collect(), n))
            .collect();

        let blocked: Vec<TokenId> =
            [' ', '\t'].iter().filter_map(|c| vocab.char_id(*c)).collect();
        let eligible = |left: TokenId| !blocked.contains(&left);

        let mut pair_counts: HashMap<(TokenId, TokenId), i64> = HashMap::new();
        let mut occurs_in: HashMap<(TokenId, TokenId), HashSet<u32>> = HashMap::new();
        for (w, (syms, n)) in words.iter().enumerate() {
            for pair in syms.windows(2) {
                if eligible(pair[0]) {
                    *pair_counts.entry((pair[0], pair[1])).or_default() += *n as i64;
                    occurs_in.entry((pair[0], pair[1])).or_default().insert(w as u32);
                }
            }
        }
        let mut heap: BinaryHeap<(i64, Reverse<(TokenId, TokenId)>)> =
            pair_counts.iter().map(|(p, n)| (*n, Reverse(*p))).collect();

        let mut merges = MergeTable::default();
        let mut exhausted = false;
        while vocab.len() < config.vocab_size {
            let Some((count, Reverse(pair))) = heap.pop() else {
                exhausted = true;
                break;
            };
            if pair_counts.get(&pair).copied() != Some(count) {
                continue;
            }
            if count < 2 {
                exhausted = true;
                break;
            }
            let (a, b) = pair;
            let merged_text = format!("{}{}", vocab.tokens[a as usize], vocab.tokens[b as usize]);
            let merged = match vocab.id_of(&merged_text) {
                Some(id) => id,
                None => vocab.push(merged_text),
            };
            merges.push(a, b, merged);
            pair_counts.remove(&pair);

            let mut affected: Vec<u32> =
                occurs_in.remove(&pair).unwrap_or_default().into_iter().collect();
            affected.sort_unstable();
            let mut touched: HashSet<(TokenId, TokenId)> = HashSet::new();
            for w in affected {
                let (syms, n) = &mut words[w as usize];
                let n = *n as i64;
                if !syms.windows(2).any(|p| p[0] == a && p[1] == b) {
                    continue;
                }
                for p in syms.windows(2) {
                    let key = (p[0], p[1]);
                    if key != pair && eligible(p[0]) {
                        if let Some(c) = pair_counts.get_mut(&key) {
                            *c -= n;
                        }
                        touched.insert(key);
                    }
                }
                let mut out = Vec::with_capacity(syms.len());
                let mut i = 0;
                while i < syms.len() {
                    if i + 1 < syms.len() && syms[i] == a && syms[i + 1] == b {
                        out.push(merged);
                        i += 2;
                    } else {
                        out.push(syms[i]);
                        i += 1;
                    }
                }
                *syms = out;
                for p in syms.windows(2) {
                    let key = (p[0], p[1]);
                    if eligible(p[0]) {
                        *pair_counts.entry(key).or_default() += n;
                        occurs_in.entry(key).or_default().insert(w);
                        touched.insert(key);
                    }
                }
            }
            let mut touched: Vec<_> = touched.into_iter().collect();
            touched.sort_unstable();
            for key in touched {
                match pair_counts.get(&key).copied() {
                    Some(c) if c <= 0 => {
                        pair_counts.remove(&key);
                    }
                    Some(c) => heap.push((c, Reverse(key))),
                    None => {}
                }
            }
        }
        let report = TrainReport { merges: merges.len(), exhausted };
        Ok((Tokenizer::from_parts(vocab, merges), report))
    }

    fn encode_run(&self, run: &str, out: &mut Vec<TokenId>) {
        let mut syms: Vec<TokenId> = run.chars().map(|c| self.vocab.char_id(c).unwrap()).collect();
        while syms.len() > 1 {
            let mut best: Option<(u32, TokenId, TokenId, TokenId)> = None;
            for p in syms.windows(2) {
                if let Some((rank, merged)) = self.merges.get(p[0], p[1]) {
                    if best.map_or(true, |b| rank < b.0) {
                        best = Some((rank, p[0], p[1], merged));
                    }
                }
            }
            let Some((_, a, b, merged)) = best else { break };
            let mut i = 0;
            let mut j = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == a && syms[i + 1] == b {
                    syms[j] = merged;
                    i += 2;
                } else {
                    syms[j] = syms[i];
                    i += 1;
                }
                j += 1;
            }
            syms.truncate(j);
        }
        out.extend_from_slice(&syms);
    }

    /// Applies merges in rank order inside each newline-free run.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(text.len() / 2 + 1);
        self.encode_into(text, &mut out);
        out
    }

    pub fn encode_into(&self, text: &str, out: &mut Vec<TokenId>) {
        for_each_piece(text, |c| self.is_base(c), |piece| match piece {
            Piece::Special(id) => out.push(id),
            Piece::Text(run) => self.encode_run(run, out),
        });
    }

    /// Concatenated token strings; `UNK` renders as U+FFFD.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String, TokenizerError> {
        let mut out = String::new();
        for &id in ids {
            out.push_str(self.render(id)?);
        }
        Ok(out)
    }

    /// Display text of one token.
    pub fn render(&self, id: TokenId) -> Result<&str, TokenizerError> {
        if id == UNK_ID {
            return Ok(UNK_RENDERED);
        }
        self.vocab.token(id).ok_or(TokenizerError::OutOfRange(id))
    }

    /// Longest suffix of the current line that occurs inside some token.
    ///
    /// Returns the suffix and its length in characters. The walk stops at the
    /// last scope marker, which is never part of the suffix.
    pub fn healing_backtrack<'l>(&self, line_before_caret: &'l str) -> (&'l str, usize) {
        let start = markers::end_of_last_marker(line_before_caret);
        let line = &line_before_caret[start..];
        let n = self.healing.longest_suffix(line);
        let cut = match n {
            0 => line.len(),
            n => line.char_indices().rev().nth(n - 1).map_or(0, |(i, _)| i),
        };
        (&line[cut..], n)
    }

    /// Serializes to the `CPE-TOKENIZER v1` text format.
    pub fn to_artifact(&self) -> String {
        let mut out = String::new();
        out.push_str(ARTIFACT_MAGIC);
        out.push('\n');
        let _ = writeln!(out, "vocab {}", self.vocab.len());
        for t in &self.vocab.tokens {
            escape_into(t, &mut out);
            out.push('\n');
        }
        let _ = writeln!(out, "merges {}", self.merges.len());
        for (a, b) in &self.merges.pairs {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    pub fn from_artifact(text: &str) -> Result<Tokenizer, TokenizerError> {
        let err = |line: usize, message: &str| TokenizerError::Artifact { line, message: message.to_string() };
        let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| lines.next().ok_or_else(|| err(0, &format!("missing {what}")));

        let (n, magic) = next("magic")?;
        if magic != ARTIFACT_MAGIC {
            return Err(err(n, "not a CPE-TOKENIZER v1 file"));
        }
        let (n, header) = next("vocab header")?;
        let size: usize = header
            .strip_prefix("vocab ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(n, "expected `vocab <N>`"))?;
        let mut tokens = Vec::with_capacity(size);
        for _ in 0..size {
            let (n, line) = next("token")?;
            tokens.push(unescape(line).map_err(|m| err(n, &m))?);
        }
        let vocab = Vocabulary::from_tokens(tokens).map_err(|m| err(3, &m))?;
        let (n, header) = next("merges header")?;
        let count: usize = header
            .strip_prefix("merges ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(n, "expected `merges <M>`"))?;
        let mut merges = MergeTable::default();
        for _ in 0..count {
            let (n, line) = next("merge")?;
            let mut parts = line.split(' ');
            let (a, b) = match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => (a.parse::<TokenId>(), b.parse::<TokenId>()),
                _ => return Err(err(n, "expected `left_id right_id`")),
            };
            let (a, b) = (a.map_err(|_| err(n, "bad id"))?, b.map_err(|_| err(n, "bad id"))?);
            let (Some(l), Some(r)) = (vocab.token(a), vocab.token(b)) else {
                return Err(err(n, "merge id out of range"));
            };
            if markers::is_special(a) || markers::is_special(b) {
                return Err(err(n, "merge involves a special token"));
            }
            let merged = vocab
                .id_of(&format!("{l}{r}"))
                .ok_or_else(|| err(n, "merge result is not in the vocabulary"))?;
            merges.push(a, b, merged);
        }
        match lines.next() {
            Some((_, "")) if lines.next().is_none() => {}
            _ => return Err(err(0, "trailing content after merges")),
        }
        Ok(Tokenizer::from_parts(vocab, merges))
    }
}

const UNK_RENDERED: &str = "\u{fffd}";

fn escape_into(token: &str, out: &mut String) {
    for c in token.chars() {
        match c {
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\\' => out.push_str("\\\\"),
            ' '..='~' => out.push(c),
            c if (c as u32) <= 0xffff => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => {
                let _ = write!(out, "\\U{:08x}", c as u32);
            }
        }
    }
}

fn unescape(line: &str) -> Result<String, String> {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('\\') => out.push('\\'),
            Some(k @ ('u' | 'U')) => {
                let width = if k == 'u' { 4 } else { 8 };
                let hex: String = chars.by_ref().take(width).collect();
                let code = u32::from_str_radix(&hex, 16)
                    .ok()
                    .filter(|_| hex.len() == width)
                    .and_then(char::from_u32)
                    .ok_or_else(|| format!("bad escape `\\{k}{hex}`"))?;
                out.push(code);
            }
            other => return Err(format!("bad escape `\\{}`", other.unwrap_or(' '))),
        }
    }
    Ok(out)
}

/// True if no two tokens differ only by leading whitespace.
pub fn no_leading_whitespace_variants(vocab: &Vocabulary) -> bool {
    let mut seen: HashSet<&str> = HashSet::new();
    for t in vocab.tokens().iter().skip(SPECIALS.len()) {
        let stripped = t.trim_start_matches([' ', '\t']);
        if stripped.is_empty() {
            continue;
        }
        if !seen.insert(stripped) {
            return false;
        }
    }
    true
}
