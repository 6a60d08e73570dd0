//! Corpus records and the repository-family train/validation/test split.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One source file of the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusFile {
    pub repo_id: String,
    /// Path inside the repository, `/`-separated.
    pub relative_path: String,
    pub extension: String,
    pub text: String,
}

impl CorpusFile {
    pub fn new(repo_id: impl Into<String>, relative_path: impl Into<String>, text: impl Into<String>) -> Self {
        let relative_path = relative_path.into();
        let extension = extension_of(&relative_path).to_string();
        CorpusFile { repo_id: repo_id.into(), relative_path, extension, text: text.into() }
    }

    /// `repo_id/relative_path`, the identifier used in position files.
    pub fn file_id(&self) -> String {
        let mut id = self.repo_id.clone();
        id.push('/');
        id.push_str(&self.relative_path);
        id
    }
}

/// Final dot-suffix of the last path component, empty when there is none.
pub fn extension_of(path: &str) -> &str {
    let name = path.rsplit('/').next().unwrap_or(path);
    match name.rfind('.') {
        Some(i) if i + 1 < name.len() => &name[i + 1..],
        _ => "",
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusError {
    InvalidRatios,
    TooFewFamilies { families: usize, segments: usize },
    ForkMapLine { line: usize },
}

impl fmt::Display for CorpusError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusError::InvalidRatios => {
                write!(f, "split ratios must be non-negative and sum to 1")
            }
            CorpusError::TooFewFamilies { families, segments } => write!(
                f,
                "{families} repository families cannot fill {segments} non-empty segments"
            ),
            CorpusError::ForkMapLine { line } => {
                write!(f, "fork map line {line} is not `repo_id<TAB>family_id`")
            }
        }
    }
}

impl core::error::Error for CorpusError {}

/// Segment proportions, fork grouping and seed for [`split_corpus`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    /// Train, validation, test.
    pub ratios: [f64; 3],
    /// repo id -> canonical family id. Repos not listed form their own family.
    pub fork_map: BTreeMap<String, String>,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { ratios: [0.80, 0.05, 0.15], fork_map: BTreeMap::new(), seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let sum: f64 = self.ratios.iter().sum();
        if self.ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || libm::fabs(sum - 1.0) > 1e-9 {
            return Err(CorpusError::InvalidRatios);
        }
        Ok(())
    }

    pub fn family_of<'a>(&'a self, repo_id: &'a str) -> &'a str {
        self.fork_map.get(repo_id).map(String::as_str).unwrap_or(repo_id)
    }
}

/// Parses `repo_id<TAB>family_id` lines. Blank lines are ignored.
pub fn parse_fork_map(text: &str) -> Result<BTreeMap<String, String>, CorpusError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        match (cols.next(), cols.next(), cols.next()) {
            (Some(repo), Some(family), None) if !repo.is_empty() && !family.is_empty() => {
                map.insert(repo.to_string(), family.to_string());
            }
            _ => return Err(CorpusError::ForkMapLine { line: i + 1 }),
        }
    }
    Ok(map)
}

/// Disjoint sets of family ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Segment {
    Train,
    Validation,
    Test,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Train, Segment::Validation, Segment::Test];

    pub fn name(self) -> &'static str {
        match self {
            Segment::Train => "train",
            Segment::Validation => "validation",
            Segment::Test => "test",
        }
    }
}

impl Split {
    pub fn families(&self, segment: Segment) -> &BTreeSet<String> {
        match segment {
            Segment::Train => &self.train,
            Segment::Validation => &self.validation,
            Segment::Test => &self.test,
        }
    }

    fn families_mut(&mut self, segment: Segment) -> &mut BTreeSet<String> {
        match segment {
            Segment::Train => &mut self.train,
            Segment::Validation => &mut self.validation,
            Segment::Test => &mut self.test,
        }
    }

    /// Segment holding `repo_id`'s family.
    pub fn segment_of(&self, spec: &SplitSpec, repo_id: &str) -> Option<Segment> {
        let family = spec.family_of(repo_id);
        Segment::ALL.into_iter().find(|s| self.families(*s).contains(family))
    }
}

/// Assigns whole repository families to segments.
///
/// Families are shuffled with the seed, each non-empty segment first receives
/// one family, and the rest go to whichever segment is furthest below its
/// file-count target.
pub fn split_corpus(files: &[CorpusFile], spec: &SplitSpec) -> Result<Split, CorpusError> {
    spec.validate()?;
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for file in files {
        *sizes.entry(spec.family_of(&file.repo_id)).or_default() += 1;
    }
    let active: Vec<usize> = (0..3).filter(|&i| spec.ratios[i] > 0.0).collect();
    if sizes.len() < active.len() {
        return Err(CorpusError::TooFewFamilies { families: sizes.len(), segments: active.len() });
    }

    let mut order: Vec<(&str, usize)> = sizes.into_iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    order.shuffle(&mut rng);

    let total: usize = order.iter().map(|(_, n)| n).sum();
    let targets: Vec<f64> = spec.ratios.iter().map(|r| r * total as f64).collect();
    let mut filled = [0usize; 3];
    let mut split = Split::default();
    for (k, (family, n)) in order.into_iter().enumerate() {
        let seg = if k < active.len() {
            active[k]
        } else {
            // Largest remaining deficit; ties go to the earlier segment.
            let mut best = active[0];
            for &i in &active[1..] {
                if targets[i] - filled[i] as f64 > targets[best] - filled[best] as f64 {
                    best = i;
                }
            }
            best
        };
        filled[seg] += n;
        split.families_mut(Segment::ALL[seg]).insert(family.to_string());
    }
    Ok(split)
}
