//! Offline evaluation over a fixed position set.

use std::collections::BTreeMap;
use std::sync::Arc;

use linecomp_core::eval::{ground_truth, split_at_caret, EvalPosition, EvalRecord, EvalReport};
use linecomp_core::LanguageModel;
use serde_json::{json, Value};

use crate::engine::{CompletionRequest, Engine};

/// Path written into the header: the file id without its repository.
fn header_path(file_id: &str) -> &str {
    file_id.split_once('/').map_or(file_id, |(_, rest)| rest)
}

fn evaluate_file<M: LanguageModel>(
    engine: &Arc<Engine<M>>,
    file_id: &str,
    text: Option<&String>,
    positions: &[&EvalPosition],
) -> Vec<EvalRecord> {
    let mut session = engine.session();
    let mut out = Vec::new();
    for p in positions {
        let mut record = EvalRecord {
            file_id: file_id.to_string(),
            offset: p.offset,
            truth: String::new(),
            suggestion: None,
            latency_ms: 0.0,
            cache_hit: false,
            error: None,
        };
        let Some(text) = text else {
            record.error = Some("file not found".into());
            out.push(record);
            continue;
        };
        let Some((before, line_rest)) = split_at_caret(text, p.offset) else {
            record.error = Some("offset past end of file".into());
            out.push(record);
            continue;
        };
        let line_before = &before[before.rfind('\n').map_or(0, |i| i + 1)..];
        // Carets whose rest of line is empty after normalization are not scored.
        let Some(truth) = ground_truth(line_before, line_rest) else { continue };
        record.truth = truth;
        let request = CompletionRequest::new(header_path(file_id), before, before.chars().count());
        match session.complete(&request) {
            Ok(result) => {
                record.suggestion = result.suggestion;
                record.latency_ms = result.latency_ms;
                record.cache_hit = result.cache_hit;
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        out.push(record);
    }
    out
}

/// Runs the engine at every position, one session per file, files spread
/// over `jobs` threads. Records come back ordered by file and offset.
pub fn evaluate<M>(
    engine: &Arc<Engine<M>>,
    files: &BTreeMap<String, String>,
    positions: &[EvalPosition],
    jobs: usize,
) -> Vec<EvalRecord>
where
    M: LanguageModel + Send + Sync,
{
    let mut by_file: BTreeMap<&str, Vec<&EvalPosition>> = BTreeMap::new();
    for p in positions {
        by_file.entry(p.file_id.as_str()).or_default().push(p);
    }
    for list in by_file.values_mut() {
        list.sort();
    }
    let groups: Vec<(&str, Vec<&EvalPosition>)> = by_file.into_iter().collect();
    let jobs = jobs.max(1).min(groups.len().max(1));
    let mut records: Vec<EvalRecord> = if jobs == 1 {
        groups.iter().flat_map(|(id, ps)| evaluate_file(engine, id, files.get(*id), ps)).collect()
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..jobs)
                .map(|j| {
                    let groups = &groups;
                    scope.spawn(move || {
                        groups
                            .iter()
                            .skip(j)
                            .step_by(jobs)
                            .flat_map(|(id, ps)| evaluate_file(engine, id, files.get(*id), ps))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("evaluation thread panicked")).collect()
        })
    };
    records.sort_by(|a, b| (&a.file_id, a.offset).cmp(&(&b.file_id, b.offset)));
    records
}

pub fn record_json(r: &EvalRecord) -> Value {
    json!({
        "file_id": r.file_id,
        "offset": r.offset,
        "truth": r.truth,
        "suggestion": r.suggestion,
        "matched_ratio": r.matched_ratio(),
        "perfect": r.perfect(),
        "latency_ms": r.latency_ms,
        "cache_hit": r.cache_hit,
        "error": r.error,
    })
}

pub fn record_from_json(v: &Value) -> Option<EvalRecord> {
    Some(EvalRecord {
        file_id: v.get("file_id")?.as_str()?.to_string(),
        offset: v.get("offset")?.as_u64()? as usize,
        truth: v.get("truth")?.as_str()?.to_string(),
        suggestion: v.get("suggestion")?.as_str().map(String::from),
        latency_ms: v.get("latency_ms")?.as_f64()?,
        cache_hit: v.get("cache_hit")?.as_bool()?,
        error: v.get("error")?.as_str().map(String::from),
    })
}

pub fn report_json(r: &EvalReport) -> Value {
    json!({
        "positions_total": r.positions_total,
        "suggestions_shown": r.suggestions_shown,
        "matched_ratio": r.matched_ratio,
        "perfect_lines": r.perfect_lines,
        "shown_rate": r.shown_rate,
        "latency_p50_ms": r.latency_p50_ms,
        "latency_p90_ms": r.latency_p90_ms,
        "cache_hit_rate": r.cache_hit_rate,
    })
}

pub fn records_jsonl(records: &[EvalRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&record_json(r).to_string());
        out.push('\n');
    }
    out
}
