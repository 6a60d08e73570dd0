//! End-to-end completion: text and caret in, one suggestion out.

use std::sync::Arc;
use std::time::{Duration, Instant};

use linecomp_core::formatter::{self, CodeLines, FormatError};
use linecomp_core::generator::{generate_cancellable, StopReason};
use linecomp_core::postprocess::{
    self, correctness_verdict, BalanceChecker, CorrectnessChecker, Verdict, VerdictReason,
};
use linecomp_core::{BeamConfig, LanguageModel, NgramModel, PrefixCache, Tokenizer, TokenId};

use crate::config::EngineConfig;
use crate::io;
use crate::timeout::check_with_timeout;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error("tokenizer has {tokenizer} tokens but the model expects {model}")]
    VocabMismatch { tokenizer: usize, model: usize },
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RequestError {
    #[error("caret {caret} is past the end of a {len}-character text")]
    CaretOutOfRange { caret: usize, len: usize },
    #[error(transparent)]
    Format(#[from] FormatError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompletionRequest {
    pub path: String,
    /// Falls back to the extension of `path` when empty.
    pub extension: String,
    pub text: String,
    /// Character index into `text`.
    pub caret: usize,
}

impl CompletionRequest {
    pub fn new(path: impl Into<String>, text: impl Into<String>, caret: usize) -> Self {
        CompletionRequest { path: path.into(), extension: String::new(), text: text.into(), caret }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub suggestion: Option<String>,
    /// Beam log-probability of the chosen hypothesis.
    pub score: Option<f64>,
    pub latency_ms: f64,
    pub cache_hit: bool,
    /// `None` when generation did not run (caret in a comment, cancelled).
    pub stop_reason: Option<StopReason>,
    pub cancelled: bool,
    /// Why each rejected hypothesis was dropped, in rank order.
    pub rejections: Vec<VerdictReason>,
    pub constraint_exhausted: bool,
}

impl CompletionResult {
    fn empty(start: Instant) -> Self {
        CompletionResult {
            suggestion: None,
            score: None,
            latency_ms: elapsed_ms(start),
            cache_hit: false,
            stop_reason: None,
            cancelled: false,
            rejections: Vec::new(),
            constraint_exhausted: false,
        }
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1000.0
}

/// Shared, immutable part of the completion pipeline.
pub struct Engine<M: LanguageModel = NgramModel> {
    pub tokenizer: Tokenizer,
    pub model: M,
    pub config: EngineConfig,
    checker: Arc<dyn CorrectnessChecker>,
}

impl Engine<NgramModel> {
    pub fn load(config: EngineConfig) -> Result<Self, EngineError> {
        let tokenizer = io::load_tokenizer(&config.tokenizer_path)?;
        let model = io::load_model(&config.model_path)?;
        Engine::new(tokenizer, model, config)
    }
}

impl<M> Engine<M>
where
    M: LanguageModel,
{
    pub fn new(tokenizer: Tokenizer, model: M, config: EngineConfig) -> Result<Self, EngineError> {
        if tokenizer.vocab_size() != model.vocab_size() {
            return Err(EngineError::VocabMismatch { tokenizer: tokenizer.vocab_size(), model: model.vocab_size() });
        }
        Ok(Engine { tokenizer, model, config, checker: Arc::new(BalanceChecker) })
    }

    pub fn with_checker(mut self, checker: Arc<dyn CorrectnessChecker>) -> Self {
        self.checker = checker;
        self
    }

    pub fn max_context(&self) -> usize {
        self.config.max_context.min(self.model.max_context_length())
    }

    pub fn session(self: &Arc<Self>) -> Session<M> {
        let mut cache = PrefixCache::new(self.max_context(), self.config.init_fraction);
        cache.stale_reuse = self.config.stale_reuse;
        Session { engine: Arc::clone(self), cache, anchor: None }
    }
}

/// Where the cached context starts, so that later requests in the same file
/// compose their context from the same line and extend the cached ids.
#[derive(Debug, Clone)]
struct Anchor {
    header: Vec<TokenId>,
    line: usize,
}

/// One editor connection: an engine plus its own cache.
pub struct Session<M: LanguageModel = NgramModel> {
    engine: Arc<Engine<M>>,
    cache: PrefixCache<M::State>,
    anchor: Option<Anchor>,
}

fn char_to_byte(text: &str, caret: usize) -> Option<usize> {
    if caret == 0 {
        return Some(0);
    }
    match text.char_indices().nth(caret) {
        Some((i, _)) => Some(i),
        None if text.chars().count() == caret => Some(text.len()),
        None => None,
    }
}

impl<M> Session<M>
where
    M: LanguageModel,
{
    pub fn engine(&self) -> &Arc<Engine<M>> {
        &self.engine
    }

    pub fn clear_cache(&mut self) {
        self.cache.clear();
        self.anchor = None;
    }

    pub fn complete(&mut self, request: &CompletionRequest) -> Result<CompletionResult, RequestError> {
        self.complete_cancellable(request, &mut || false)
    }

    /// Runs the pipeline; `cancelled` is polled between beam iterations.
    pub fn complete_cancellable(
        &mut self,
        request: &CompletionRequest,
        cancelled: &mut dyn FnMut() -> bool,
    ) -> Result<CompletionResult, RequestError> {
        let start = Instant::now();
        let engine = Arc::clone(&self.engine);
        let byte = char_to_byte(&request.text, request.caret).ok_or(RequestError::CaretOutOfRange {
            caret: request.caret,
            len: request.text.chars().count(),
        })?;
        let before = &request.text[..byte];
        let (completed, current) = match before.rfind('\n') {
            Some(i) => (&before[..=i], &before[i + 1..]),
            None => ("", before),
        };
        if formatter::ends_in_comment(current) {
            return Ok(CompletionResult::empty(start));
        }

        let mut code = formatter::normalize(completed);
        code.push_str(current);
        let scoped = formatter::encode_scopes_lenient(&code).text;
        let last_line = &scoped[scoped.rfind('\n').map_or(0, |i| i + 1)..];
        let (pending, _) = engine.tokenizer.healing_backtrack(last_line);
        let context_text = &scoped[..scoped.len() - pending.len()];

        let extension = if request.extension.is_empty() {
            linecomp_core::corpus::extension_of(&request.path)
        } else {
            &request.extension
        };
        let header = formatter::header_ids(extension, &request.path, &engine.tokenizer);
        let lines = CodeLines::new(context_text, &engine.tokenizer);
        let ids = self.compose(header, &lines)?;
        let (state, cache_hit) = self.cache.process(&engine.model, &ids);

        let beam = BeamConfig { pending_prefix: pending.to_string(), ..engine.config.beam.clone() };
        let Some(generated) = generate_cancellable(&engine.model, &state, &beam, &engine.tokenizer, cancelled)
        else {
            let mut result = CompletionResult::empty(start);
            result.cache_hit = cache_hit;
            result.cancelled = true;
            return Ok(result);
        };

        let filter = &engine.config.filter;
        let timeout = Duration::from_millis(filter.correctness_timeout_ms);
        let mut result = CompletionResult::empty(start);
        result.cache_hit = cache_hit;
        result.stop_reason = Some(generated.stop_reason);
        result.constraint_exhausted = generated.constraint_exhausted;
        for hyp in &generated.hypotheses {
            let Some(suggestion) = hyp.line().strip_prefix(pending) else { continue };
            if suggestion.trim().is_empty() {
                continue;
            }
            let mut verdict = postprocess::low_score_verdict(hyp, filter);
            if verdict.kept {
                verdict = postprocess::filter_safety(suggestion, filter);
            }
            if verdict.kept && engine.config.correctness_check {
                verdict = correctness_verdict(check_with_timeout(&engine.checker, current, suggestion, timeout));
            }
            if verdict != Verdict::KEPT {
                result.rejections.push(verdict.reason);
                continue;
            }
            result.suggestion = Some(postprocess::close_pairs(suggestion, current));
            result.score = Some(hyp.log_prob);
            break;
        }
        result.latency_ms = elapsed_ms(start);
        Ok(result)
    }

    /// Header plus code, starting at the anchor line while the result still
    /// extends the cached ids and fits; otherwise a fresh composition at the
    /// warm-start budget.
    fn compose(&mut self, header: Vec<TokenId>, lines: &CodeLines) -> Result<Vec<TokenId>, RequestError> {
        if let Some(anchor) = &self.anchor {
            if anchor.header == header && anchor.line < lines.len() {
                let len = header.len() + lines.len_from(anchor.line);
                if len <= self.cache.capacity() {
                    let mut ids = header.clone();
                    lines.ids_from(anchor.line, &mut ids);
                    if ids.starts_with(self.cache.cached_ids()) && !self.cache.is_empty() {
                        return Ok(ids);
                    }
                }
            }
        }
        let composed = formatter::compose_lines(header.clone(), lines, self.cache.warm_start_len())?;
        self.cache.clear();
        self.anchor = (!composed.cut_inside_line).then_some(Anchor { header, line: composed.first_line });
        Ok(composed.ids)
    }
}
