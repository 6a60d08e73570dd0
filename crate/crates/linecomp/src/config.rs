//! Engine configuration file: `key = value` lines, `#` starts a comment.

use std::path::{Path, PathBuf};

use linecomp_core::formatter::DEFAULT_MAX_CONTEXT;
use linecomp_core::{BeamConfig, FilterConfig, FormatterConfig};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {value}")]
    Value { line: usize, key: String, value: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub tokenizer_path: PathBuf,
    pub model_path: PathBuf,
    pub beam: BeamConfig,
    pub filter: FilterConfig,
    pub formatter: FormatterConfig,
    pub max_context: usize,
    pub init_fraction: f64,
    pub stale_reuse: bool,
    pub correctness_check: bool,
}

impl EngineConfig {
    pub fn new(tokenizer_path: impl Into<PathBuf>, model_path: impl Into<PathBuf>) -> Self {
        EngineConfig {
            tokenizer_path: tokenizer_path.into(),
            model_path: model_path.into(),
            beam: BeamConfig::default(),
            filter: FilterConfig::default(),
            formatter: FormatterConfig::default(),
            max_context: DEFAULT_MAX_CONTEXT,
            init_fraction: linecomp_core::cache::DEFAULT_INIT_FRACTION,
            stale_reuse: false,
            correctness_check: true,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.beam.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.filter.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        linecomp_core::formatter::check_language(&self.formatter)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.init_fraction > 0.0 && self.init_fraction <= 1.0) {
            return Err(ConfigError::Invalid("init_fraction must be in (0, 1]".into()));
        }
        if self.max_context < 2 {
            return Err(ConfigError::Invalid("max_context must be at least 2".into()));
        }
        Ok(())
    }

    /// Parses a config file body. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut tokenizer = None;
        let mut model = None;
        let mut config = EngineConfig::new("", "");
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: line_no })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = || ConfigError::Value { line: line_no, key: key.to_string(), value: value.to_string() };
            let num = || value.parse::<f64>().map_err(|_| bad());
            let int = || value.parse::<usize>().map_err(|_| bad());
            let flag = || value.parse::<bool>().map_err(|_| bad());
            let list = |v: &str| -> Result<Vec<String>, ConfigError> {
                let text = std::fs::read_to_string(base.join(v)).map_err(|_| bad())?;
                Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
            };
            match key {
                "tokenizer" => tokenizer = Some(base.join(value)),
                "model" => model = Some(base.join(value)),
                "beam_width" => config.beam.beam_width = int()?,
                "max_iterations" => config.beam.max_iterations = int()?,
                "termination_ratio" => config.beam.termination_ratio = num()?,
                "collect_terminated" => config.beam.collect_terminated = flag()?,
                "renormalize_constrained" => config.beam.renormalize_constrained = flag()?,
                "max_context" => config.max_context = int()?,
                "init_fraction" => config.init_fraction = num()?,
                "stale_reuse" => config.stale_reuse = flag()?,
                "language" => config.formatter.language = value.to_string(),
                "import_dropout" => config.formatter.import_dropout_p = num()?,
                "min_mean_token_logprob" => config.filter.min_mean_token_logprob = num()?,
                "secret_entropy_threshold" => config.filter.secret_entropy_threshold = num()?,
                "secret_min_length" => config.filter.secret_min_length = int()?,
                "correctness_timeout_ms" => config.filter.correctness_timeout_ms = int()? as u64,
                "correctness_check" => config.correctness_check = flag()?,
                "danger_patterns" => config.filter.danger_patterns = list(value)?,
                "profanity" => config.filter.profanity = list(value)?,
                _ => return Err(ConfigError::UnknownKey { line: line_no, key: key.to_string() }),
            }
        }
        config.tokenizer_path = tokenizer.ok_or(ConfigError::Missing("tokenizer"))?;
        config.model_path = model.ok_or(ConfigError::Missing("model"))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(Self::parse(&text, base).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?)
    }
}
