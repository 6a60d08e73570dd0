//! Corpus preparation and artifact training.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use linecomp_core::corpus::{split_corpus, Segment};
use linecomp_core::formatter::training_document;
use linecomp_core::lm::DEFAULT_BACKOFF;
use linecomp_core::tokenizer::TrainReport;
use linecomp_core::{CorpusFile, NgramModel, SplitSpec, Tokenizer, TokenizerConfig};

use crate::io::{self, SkipReport};

#[derive(Debug, Clone)]
pub struct PrepOptions {
    pub extensions: Vec<String>,
    pub dropout: f64,
    pub seed: u64,
    pub ratios: [f64; 3],
    pub fork_map: BTreeMap<String, String>,
}

impl Default for PrepOptions {
    fn default() -> Self {
        PrepOptions {
            extensions: vec!["py".into()],
            dropout: 0.5,
            seed: 0,
            ratios: SplitSpec::default().ratios,
            fork_map: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct PrepSummary {
    pub files: [usize; 3],
    pub skipped: SkipReport,
}

/// FNV-1a, to give every file its own dropout stream.
fn file_seed(seed: u64, file_id: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in file_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Training text of a file; import dropout only applies to the train segment.
pub fn document_for(file: &CorpusFile, segment: Segment, options: &PrepOptions) -> String {
    let p = if segment == Segment::Train { options.dropout } else { 0.0 };
    training_document(&file.extension, &file.relative_path, &file.text, p, file_seed(options.seed, &file.file_id()))
}

/// Splits `corpus` and writes `out/<segment>/<repo>/<path>` documents plus
/// `out/split.tsv` listing `file_id<TAB>segment`.
pub fn prep(corpus: &Path, out: &Path, options: &PrepOptions) -> anyhow::Result<PrepSummary> {
    let allow: Vec<&str> = options.extensions.iter().map(String::as_str).collect();
    let (files, skipped) = io::ingest(corpus, &allow)?;
    let spec = SplitSpec { ratios: options.ratios, fork_map: options.fork_map.clone(), seed: options.seed };
    let split = split_corpus(&files, &spec).map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut summary = PrepSummary { skipped, ..PrepSummary::default() };
    let mut listing = String::new();
    for file in &files {
        let segment = split.segment_of(&spec, &file.repo_id).expect("every family is assigned");
        summary.files[segment as usize] += 1;
        let doc = document_for(file, segment, options);
        io::write_file(&out.join(segment.name()).join(file.file_id()), doc)?;
        let _ = writeln!(listing, "{}\t{}", file.file_id(), segment.name());
    }
    io::write_file(&out.join("split.tsv"), listing)?;
    Ok(summary)
}

pub fn train_tokenizer(docs: &[String], vocab_size: usize) -> anyhow::Result<(Tokenizer, TrainReport)> {
    let config = TokenizerConfig { vocab_size, ..TokenizerConfig::default() };
    Tokenizer::train(docs.iter().map(String::as_str), &config).map_err(|e| anyhow::anyhow!("{e}"))
}

pub fn train_lm(docs: &[String], tokenizer: &Tokenizer, order: usize) -> anyhow::Result<NgramModel> {
    let sequences: Vec<Vec<u32>> = docs.iter().map(|d| tokenizer.encode(d)).collect();
    NgramModel::fit(&sequences, order, DEFAULT_BACKOFF, tokenizer.vocab_size()).map_err(|e| anyhow::anyhow!("{e}"))
}
