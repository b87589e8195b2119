//! Dataset ingestion, plan-equivalence scoring, and per-category accuracy
//! aggregation.

use crate::plan::{parse_plan, print_canonical};
use crate::planner::{build_system_prompt, DecodeParams, Planner, PlannerRequest};
use crate::perception::MemoryProfile;
use crate::schema::registry;
use crate::validate::validate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub category: String,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub gold_plan: String,
}

/// Optional renaming of dataset fields, so externally published files can
/// be loaded without code changes.
#[derive(Debug, Clone, Deserialize)]
pub struct FieldMap {
    #[serde(default = "d_id")]
    pub id: String,
    #[serde(default = "d_category")]
    pub category: String,
    #[serde(default = "d_instruction")]
    pub instruction: String,
    #[serde(default = "d_system")]
    pub system: String,
    #[serde(default = "d_gold_plan")]
    pub gold_plan: String,
}

fn d_id() -> String {
    "id".into()
}
fn d_category() -> String {
    "category".into()
}
fn d_instruction() -> String {
    "instruction".into()
}
fn d_system() -> String {
    "system".into()
}
fn d_gold_plan() -> String {
    "gold_plan".into()
}

impl Default for FieldMap {
    fn default() -> Self {
        FieldMap {
            id: d_id(),
            category: d_category(),
            instruction: d_instruction(),
            system: d_system(),
            gold_plan: d_gold_plan(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("line {line}: gold plan invalid: {message}")]
    InvalidGoldPlan { line: usize, message: String },
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, DatasetError> {
    load_dataset_mapped(path, &FieldMap::default())
}

/// JSON-Lines loader. Unknown fields are ignored; records whose gold plan
/// fails to parse or validate are rejected with their line number.
pub fn load_dataset_mapped(
    path: impl AsRef<Path>,
    map: &FieldMap,
) -> Result<Vec<DatasetRecord>, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line)
            .map_err(|e| DatasetError::MalformedLine { line: lineno, message: e.to_string() })?;
        let get_str = |key: &str| value.get(key).and_then(|v| v.as_str()).map(str::to_string);
        let record = DatasetRecord {
            id: get_str(&map.id).ok_or_else(|| DatasetError::MalformedLine {
                line: lineno,
                message: format!("missing field `{}`", map.id),
            })?,
            category: get_str(&map.category).ok_or_else(|| DatasetError::MalformedLine {
                line: lineno,
                message: format!("missing field `{}`", map.category),
            })?,
            instruction: get_str(&map.instruction).ok_or_else(|| DatasetError::MalformedLine {
                line: lineno,
                message: format!("missing field `{}`", map.instruction),
            })?,
            system: get_str(&map.system),
            gold_plan: get_str(&map.gold_plan).ok_or_else(|| DatasetError::MalformedLine {
                line: lineno,
                message: format!("missing field `{}`", map.gold_plan),
            })?,
        };
        let plan = parse_plan(&record.gold_plan).map_err(|errs| DatasetError::InvalidGoldPlan {
            line: lineno,
            message: errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "),
        })?;
        let report = validate(&plan);
        if !report.is_valid() {
            return Err(DatasetError::InvalidGoldPlan {
                line: lineno,
                message: report
                    .errors
                    .iter()
                    .map(|d| format!("step {}: {}", d.step, d.code))
                    .collect::<Vec<_>>()
                    .join("; "),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// How a predicted plan compares against gold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchResult {
    /// Byte equality of the raw texts.
    pub exact: bool,
    /// Equality of canonical forms (whitespace/quote/casing-insensitive).
    pub canonical: bool,
    /// Index-aligned steps equal under canonical per-call printing.
    pub step_matches: usize,
    pub step_total: usize,
}

/// Gold must parse (the loader guarantees this for dataset plans); a
/// predicted text that fails to parse scores canonical = false.
pub fn score_plan(predicted: &str, gold: &str) -> MatchResult {
    let exact = predicted == gold;
    let gold_plan = match parse_plan(gold) {
        Ok(p) => p,
        Err(_) => {
            // degenerate gold: fall back to byte comparison only
            return MatchResult { exact, canonical: exact, step_matches: 0, step_total: 0 };
        }
    };
    let step_total = gold_plan.len();
    match parse_plan(predicted) {
        Ok(pred_plan) => {
            let canonical = print_canonical(&pred_plan) == print_canonical(&gold_plan);
            let step_matches = pred_plan
                .steps
                .iter()
                .zip(&gold_plan.steps)
                .filter(|(a, b)| a.print_canonical() == b.print_canonical())
                .count();
            MatchResult { exact, canonical, step_matches, step_total }
        }
        Err(_) => MatchResult { exact, canonical: false, step_matches: 0, step_total },
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CategoryStats {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub backend_id: String,
    pub seed: u64,
    pub shot_count: usize,
    pub timestamp: String,
    pub decode: DecodeParams,
    /// Records whose backend call errored (each counted incorrect).
    pub backend_errors: usize,
}

/// Per-record outcome kept alongside the aggregates.
#[derive(Debug, Clone, Serialize)]
pub struct RecordResult {
    pub id: String,
    pub category: String,
    pub exact: bool,
    pub canonical: bool,
    pub step_matches: usize,
    pub step_total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub per_category: BTreeMap<String, CategoryStats>,
    pub overall: CategoryStats,
    pub metadata: RunMetadata,
    pub records: Vec<RecordResult>,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub parallelism: usize,
    pub seed: u64,
    pub memory: MemoryProfile,
    pub decode: DecodeParams,
    /// Timestamp recorded in the report; pass a fixed value for
    /// byte-stable output, or None to use the wall clock.
    pub timestamp: Option<String>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            parallelism: 1,
            seed: 0,
            memory: MemoryProfile::default(),
            decode: DecodeParams::default(),
            timestamp: None,
        }
    }
}

/// Evaluate `backend` over `records`, conditioning with `shots` (which
/// must be disjoint from `records`). A record counts correct iff its
/// canonical form equals gold. Aggregation merges by record index, so the
/// report is identical at any parallelism for deterministic backends.
pub fn run_benchmark(
    backend: &(dyn Planner + Sync),
    records: &[DatasetRecord],
    shots: &[DatasetRecord],
    opts: &RunOptions,
) -> BenchReport {
    let shot_pairs: Vec<(String, String)> = shots
        .iter()
        .map(|r| (r.instruction.clone(), r.gold_plan.clone()))
        .collect();
    let system_prompt = build_system_prompt(registry(), &opts.memory, &shot_pairs);

    let evaluate = |record: &DatasetRecord| -> RecordResult {
        let request = PlannerRequest {
            system_prompt: record.system.clone().unwrap_or_else(|| system_prompt.clone()),
            instruction: record.instruction.clone(),
            decode: opts.decode.clone(),
        };
        match backend.generate(&request) {
            Ok(response) => {
                let m = score_plan(&response.plan_text, &record.gold_plan);
                RecordResult {
                    id: record.id.clone(),
                    category: record.category.clone(),
                    exact: m.exact,
                    canonical: m.canonical,
                    step_matches: m.step_matches,
                    step_total: m.step_total,
                    backend_error: None,
                }
            }
            Err(e) => RecordResult {
                id: record.id.clone(),
                category: record.category.clone(),
                exact: false,
                canonical: false,
                step_matches: 0,
                step_total: parse_plan(&record.gold_plan).map(|p| p.len()).unwrap_or(0),
                backend_error: Some(e.to_string()),
            },
        }
    };

    let parallelism = opts.parallelism.max(1);
    let results: Vec<RecordResult> = if parallelism == 1 || records.len() <= 1 {
        records.iter().map(evaluate).collect()
    } else {
        // contiguous chunks, merged back by index: completion order is
        // irrelevant to the report
        let mut slots: Vec<Option<RecordResult>> = (0..records.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let mut rest: &mut [Option<RecordResult>] = &mut slots;
            let mut offset = 0usize;
            let base = records.len() / parallelism;
            let extra = records.len() % parallelism;
            for i in 0..parallelism {
                let size = (base + usize::from(i < extra)).min(rest.len());
                if size == 0 {
                    break;
                }
                let (chunk, tail) = rest.split_at_mut(size);
                rest = tail;
                let start = offset;
                offset += size;
                let evaluate = &evaluate;
                scope.spawn(move || {
                    for (k, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(evaluate(&records[start + k]));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.expect("every record evaluated")).collect()
    };

    let backend_errors = results.iter().filter(|r| r.backend_error.is_some()).count();
    let mut per_category: BTreeMap<String, CategoryStats> = BTreeMap::new();
    for r in &results {
        let stats = per_category.entry(r.category.clone()).or_default();
        stats.n += 1;
        if r.canonical {
            stats.correct += 1;
        }
    }
    let mut overall = CategoryStats::default();
    for stats in per_category.values_mut() {
        stats.accuracy = if stats.n == 0 { 0.0 } else { stats.correct as f64 / stats.n as f64 };
        overall.n += stats.n;
        overall.correct += stats.correct;
    }
    overall.accuracy =
        if overall.n == 0 { 0.0 } else { overall.correct as f64 / overall.n as f64 };

    let timestamp = opts
        .timestamp
        .clone()
        .unwrap_or_else(|| chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string());
    BenchReport {
        per_category,
        overall,
        metadata: RunMetadata {
            backend_id: backend.id().to_string(),
            seed: opts.seed,
            shot_count: shots.len(),
            timestamp,
            decode: opts.decode.clone(),
            backend_errors,
        },
        records: results,
    }
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,n,correct,accuracy\n");
        for (cat, stats) in &self.per_category {
            let _ = writeln!(out, "{cat},{},{},{:.4}", stats.n, stats.correct, stats.accuracy);
        }
        let _ = writeln!(
            out,
            "overall,{},{},{:.4}",
            self.overall.n, self.overall.correct, self.overall.accuracy
        );
        out
    }

    /// Aligned terminal table.
    pub fn render_table(&self) -> String {
        let width = self
            .per_category
            .keys()
            .map(|k| k.len())
            .chain(["overall".len(), "category".len()])
            .max()
            .unwrap_or(8);
        let mut out = String::new();
        let _ = writeln!(out, "{:width$}  {:>6}  {:>7}  {:>8}", "category", "n", "correct", "accuracy");
        for (cat, stats) in &self.per_category {
            let _ = writeln!(
                out,
                "{cat:width$}  {:>6}  {:>7}  {:>7.2}%",
                stats.n,
                stats.correct,
                stats.accuracy * 100.0
            );
        }
        let _ = writeln!(
            out,
            "{:width$}  {:>6}  {:>7}  {:>7.2}%",
            "overall",
            self.overall.n,
            self.overall.correct,
            self.overall.accuracy * 100.0
        );
        out
    }
}
