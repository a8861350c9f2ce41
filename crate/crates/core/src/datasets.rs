//! Prompt ingestion and deterministic subsampling.
//!
//! Shuffles use ChaCha8 seeded through `SeedableRng::seed_from_u64` and a
//! Fisher-Yates pass with rejection-sampled indices, so a (records, plan)
//! pair produces the same subset on every platform and toolchain.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::taxonomy::TaskCategory;

pub const DEFAULT_SEED: u64 = 38;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub dataset: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<TaskCategory>,
    /// Any other string-valued input columns (stratum labels, source ids).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fields: BTreeMap<String, String>,
}

impl PromptRecord {
    pub fn new(id: impl Into<String>, dataset: impl Into<String>, text: impl Into<String>) -> Self {
        PromptRecord {
            id: id.into(),
            dataset: dataset.into(),
            text: text.into(),
            gold_answer: None,
            category: None,
            fields: BTreeMap::new(),
        }
    }

    pub fn field(&self, name: &str) -> Option<&str> {
        self.fields.get(name).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Option<InputFormat> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Some(InputFormat::Jsonl),
            "csv" => Some(InputFormat::Csv),
            _ => None,
        }
    }
}

/// Per-dataset subsampling plan. With `stratum`, `count` applies to each
/// distinct value of that field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl SamplePlan {
    pub fn new(count: usize) -> Self {
        SamplePlan {
            seed: DEFAULT_SEED,
            count,
            stratum: None,
        }
    }

    pub fn stratified(count_per_stratum: usize, field: impl Into<String>) -> Self {
        SamplePlan {
            seed: DEFAULT_SEED,
            count: count_per_stratum,
            stratum: Some(field.into()),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

struct RawRow {
    line: usize,
    values: BTreeMap<String, String>,
}

fn build_records(path: &Path, dataset: &str, rows: Vec<RawRow>) -> Result<Vec<PromptRecord>> {
    let schema = |line: usize, message: String| Error::Schema {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (index, mut row) in rows.into_iter().enumerate() {
        let text = row
            .values
            .remove("text")
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| schema(row.line, "missing or empty \"text\" field".into()))?;
        let id = match row.values.remove("id").filter(|s| !s.is_empty()) {
            Some(id) => {
                if !seen.insert(id.clone()) {
                    return Err(schema(row.line, format!("duplicate id {id:?}")));
                }
                id
            }
            None => format!("{dataset}:{index}"),
        };
        let category = match row.values.remove("category").filter(|s| !s.trim().is_empty()) {
            Some(c) => Some(
                c.parse::<TaskCategory>()
                    .map_err(|e| schema(row.line, e.to_string()))?,
            ),
            None => None,
        };
        let gold_answer = row.values.remove("gold_answer").filter(|s| !s.is_empty());
        out.push(PromptRecord {
            id,
            dataset: dataset.to_string(),
            text,
            gold_answer,
            category,
            fields: row.values,
        });
    }
    // Synthesised ids may still collide with explicit ones.
    let mut all = HashSet::new();
    for r in &out {
        if !all.insert(r.id.as_str()) {
            return Err(schema(0, format!("id {:?} is not unique", r.id)));
        }
    }
    Ok(out)
}

fn scalar_to_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

fn read_jsonl(path: &Path) -> Result<Vec<RawRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: serde_json::Map<String, Value> =
            serde_json::from_str(&line).map_err(|e| Error::Schema {
                path: path.to_path_buf(),
                line: n + 1,
                message: format!("not a JSON object: {e}"),
            })?;
        let values = obj
            .iter()
            .filter_map(|(k, v)| scalar_to_string(v).map(|s| (k.clone(), s)))
            .collect();
        rows.push(RawRow {
            line: n + 1,
            values,
        });
    }
    Ok(rows)
}

fn read_csv(path: &Path) -> Result<Vec<RawRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if !headers.iter().any(|h| h == "text") {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            line: 1,
            message: "header has no \"text\" column".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let values = headers
            .iter()
            .zip(record.iter())
            .map(|(h, v)| (h.to_string(), v.to_string()))
            .collect();
        rows.push(RawRow {
            line: i + 2,
            values,
        });
    }
    Ok(rows)
}

/// Reads prompts in file order. Missing ids become `dataset:index`.
pub fn load_prompts(path: impl AsRef<Path>, format: InputFormat, dataset: &str) -> Result<Vec<PromptRecord>> {
    let path = path.as_ref();
    let rows = match format {
        InputFormat::Jsonl => read_jsonl(path)?,
        InputFormat::Csv => read_csv(path)?,
    };
    build_records(path, dataset, rows)
}

/// Uniform integer in `0..n` without modulo bias.
fn below(rng: &mut ChaCha8Rng, n: u64) -> u64 {
    debug_assert!(n > 0);
    let rem = (u64::MAX % n + 1) % n;
    loop {
        let x = rng.next_u64();
        if rem == 0 || x <= u64::MAX - rem {
            return x % n;
        }
    }
}

/// Fisher-Yates shuffle driven by ChaCha8 seeded with `seed`.
pub fn shuffle_with_seed<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = below(&mut rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Shuffle with the plan's seed, then keep the first `count` records
/// (per stratum when the plan names one; strata are emitted in sorted order).
pub fn seeded_subsample(records: &[PromptRecord], plan: &SamplePlan) -> Result<Vec<PromptRecord>> {
    match &plan.stratum {
        None => {
            if plan.count > records.len() {
                return Err(Error::precondition(format!(
                    "sample count {} exceeds dataset size {}",
                    plan.count,
                    records.len()
                )));
            }
            let mut all = records.to_vec();
            shuffle_with_seed(&mut all, plan.seed);
            all.truncate(plan.count);
            Ok(all)
        }
        Some(field) => {
            let mut strata: BTreeMap<&str, Vec<PromptRecord>> = BTreeMap::new();
            for r in records {
                let value = r.field(field).ok_or_else(|| {
                    Error::precondition(format!("record {} has no stratum field {field:?}", r.id))
                })?;
                strata.entry(value).or_default().push(r.clone());
            }
            let mut out = Vec::new();
            for (value, mut members) in strata {
                if plan.count > members.len() {
                    return Err(Error::precondition(format!(
                        "stratum {field}={value:?} has {} records, fewer than {}",
                        members.len(),
                        plan.count
                    )));
                }
                shuffle_with_seed(&mut members, plan.seed);
                members.truncate(plan.count);
                out.extend(members);
            }
            Ok(out)
        }
    }
}

pub fn tally_by_category(records: &[PromptRecord]) -> BTreeMap<TaskCategory, usize> {
    let mut out = BTreeMap::new();
    for r in records {
        if let Some(c) = r.category {
            *out.entry(c).or_default() += 1;
        }
    }
    out
}
