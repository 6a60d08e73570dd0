//! Corpus ingestion and artifact files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use linecomp_core::corpus::{self, extension_of};
use linecomp_core::{CorpusFile, NgramModel, Tokenizer};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn read_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Read { path: path.to_path_buf(), source }
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Write { path: path.to_path_buf(), source }
}

/// Files left out of an ingest because they are not UTF-8.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SkipReport {
    pub non_utf8: Vec<String>,
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), IoError> {
    for entry in fs::read_dir(dir).map_err(read_err(dir))? {
        let entry = entry.map_err(read_err(dir))?;
        let path = entry.path();
        let kind = entry.file_type().map_err(read_err(&path))?;
        if kind.is_dir() {
            walk(&path, out)?;
        } else if kind.is_file() {
            out.push(path);
        }
    }
    Ok(())
}

fn relative(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
}

/// Every file under `root` whose extension is allowed (all files when the
/// allowlist is empty). The repository is the first path component.
pub fn ingest(root: &Path, allowlist: &[&str]) -> Result<(Vec<CorpusFile>, SkipReport), IoError> {
    let mut paths = Vec::new();
    walk(root, &mut paths)?;
    let mut rels: Vec<(String, PathBuf)> = paths.into_iter().map(|p| (relative(root, &p), p)).collect();
    rels.sort();
    let mut files = Vec::new();
    let mut skipped = SkipReport::default();
    for (rel, path) in rels {
        let Some((repo, inner)) = rel.split_once('/') else { continue };
        if !allowlist.is_empty() && !allowlist.contains(&extension_of(inner)) {
            continue;
        }
        let bytes = fs::read(&path).map_err(read_err(&path))?;
        match String::from_utf8(bytes) {
            Ok(text) => files.push(CorpusFile::new(repo, inner, text)),
            Err(_) => skipped.non_utf8.push(rel),
        }
    }
    Ok((files, skipped))
}

pub fn read_fork_map(path: &Path) -> Result<BTreeMap<String, String>, IoError> {
    let text = fs::read_to_string(path).map_err(read_err(path))?;
    corpus::parse_fork_map(&text)
        .map_err(|e| IoError::Format { path: path.to_path_buf(), message: e.to_string() })
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(write_err(parent))?;
    }
    fs::write(path, contents).map_err(write_err(path))
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(read_err(path))
}

pub fn load_tokenizer(path: &Path) -> Result<Tokenizer, IoError> {
    Tokenizer::from_artifact(&read_text(path)?)
        .map_err(|e| IoError::Format { path: path.to_path_buf(), message: e.to_string() })
}

pub fn save_tokenizer(path: &Path, tokenizer: &Tokenizer) -> Result<(), IoError> {
    write_file(path, tokenizer.to_artifact())
}

pub fn load_model(path: &Path) -> Result<NgramModel, IoError> {
    let bytes = fs::read(path).map_err(read_err(path))?;
    NgramModel::from_bytes(&bytes).map_err(|e| IoError::Format { path: path.to_path_buf(), message: e.to_string() })
}

pub fn save_model(path: &Path, model: &NgramModel) -> Result<(), IoError> {
    write_file(path, model.to_bytes())
}

/// Prepared training documents: the `train` directory of a `prep` output
/// when present, otherwise every file under `dir`.
pub fn read_documents(dir: &Path) -> Result<Vec<String>, IoError> {
    let train = dir.join("train");
    let root = if train.is_dir() { train } else { dir.to_path_buf() };
    let mut paths = Vec::new();
    walk(&root, &mut paths)?;
    paths.sort();
    paths.iter().map(|p| read_text(p)).collect()
}

/// `file_id -> text` for the given ids, read from `root/<file_id>`.
pub fn read_files_by_id<'a>(
    root: &Path,
    ids: impl IntoIterator<Item = &'a str>,
) -> Result<BTreeMap<String, String>, IoError> {
    let ids: BTreeSet<&str> = ids.into_iter().collect();
    let mut out = BTreeMap::new();
    for id in ids {
        let path = root.join(id);
        out.insert(id.to_string(), read_text(&path)?);
    }
    Ok(out)
}
