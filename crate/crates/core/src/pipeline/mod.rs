//! Run configuration, persisted records and stage orchestration.
//!
//! Every stage reads its inputs from the output directory and writes its
//! outputs there, so stages can be run separately and resumed. Provider
//! traffic goes through the response cache, which makes reruns free.

mod report;
mod stages;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub use report::{
    emit_plots, emit_significance, emit_tables, format_cell, plot_data, render_svg, PlotData, PlotRow, TableFormat,
    CATEGORY_COLUMNS,
};
pub use stages::{AccuracyRecord, FailureRecord, GradeRecord, PairJudgmentRecord, SetMetrics};

use crate::datasets::{InputFormat, SamplePlan};
use crate::diversity::FunctionalAggregation;
use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::providers::{
    Client, EmbeddingSettings, HttpEmbedder, HttpRouter, MockEmbedder, ResponseCache, SimulatedLlm,
    DEFAULT_EMBEDDING_DIMENSION,
};
use crate::sampling::{default_strategies, StrategySpec, TemperatureTable, DEFAULT_K};
use crate::template;

pub const SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_ABORT_THRESHOLD: f64 = 0.2;
/// Embedding dimension used by `--mock` runs.
pub const MOCK_EMBEDDING_DIMENSION: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Functional,
    Vocabulary,
    Embedding,
    Checklist,
    Accuracy,
    Reward,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Functional,
        Metric::Vocabulary,
        Metric::Embedding,
        Metric::Checklist,
        Metric::Accuracy,
        Metric::Reward,
    ];

    /// Name used in metric records and table file names.
    pub fn record_name(self) -> &'static str {
        match self {
            Metric::Functional => "functional",
            Metric::Vocabulary => "vocabulary",
            Metric::Embedding => "embedding",
            Metric::Checklist => "quality",
            Metric::Accuracy => "accuracy",
            Metric::Reward => "reward",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<InputFormat>,
    /// Number of prompts to keep (per stratum when `stratum` is set). All when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
}

impl DatasetConfig {
    pub fn input_format(&self) -> Option<InputFormat> {
        self.format.or_else(|| InputFormat::from_path(&self.path))
    }

    pub fn plan(&self) -> Option<SamplePlan> {
        let count = self.count?;
        let plan = match &self.stratum {
            Some(field) => SamplePlan::stratified(count, field.clone()),
            None => SamplePlan::new(count),
        };
        Some(match self.seed {
            Some(seed) => plan.with_seed(seed),
            None => plan,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    #[serde(default = "default_embedding_model")]
    pub model: String,
    #[serde(default = "default_embedding_dimension")]
    pub dimension: usize,
    #[serde(default = "default_max_chars")]
    pub max_chars: usize,
}

fn default_embedding_model() -> String {
    EmbeddingSettings::default().model
}
fn default_embedding_dimension() -> usize {
    DEFAULT_EMBEDDING_DIMENSION
}
fn default_max_chars() -> usize {
    EmbeddingSettings::default().max_chars
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            model: default_embedding_model(),
            dimension: default_embedding_dimension(),
            max_chars: default_max_chars(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Response cache file; `<output_dir>/cache.jsonl` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_path: Option<PathBuf>,
    pub datasets: Vec<DatasetConfig>,
    /// Generation models.
    pub models: Vec<String>,
    /// Judge ensemble for functional diversity and checklist grading.
    #[serde(default)]
    pub judges: Vec<String>,
    /// Classification ensemble; defaults to `judges`. Must have odd size.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier_judges: Option<Vec<String>>,
    /// Accuracy grader; defaults to the first judge.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy_judge: Option<String>,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Strategy labels in display order; all seven when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategies: Option<Vec<String>>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub functional_aggregation: FunctionalAggregation,
    /// Per-model (low, medium, high) temperature overrides.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub temperatures: BTreeMap<String, [f64; 3]>,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_endpoint: Option<String>,
    #[serde(default = "default_abort_threshold")]
    pub abort_threshold: f64,
    #[serde(default)]
    pub mode: ExecMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_in_flight: Option<usize>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_metrics() -> Vec<Metric> {
    vec![
        Metric::Functional,
        Metric::Vocabulary,
        Metric::Embedding,
        Metric::Checklist,
        Metric::Accuracy,
    ]
}
fn default_abort_threshold() -> f64 {
    DEFAULT_ABORT_THRESHOLD
}

impl RunConfig {
    /// Parses a TOML config; relative paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = RunConfig::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let Some(c) = self.cache_path.as_mut() {
            fix(c);
        }
        for d in &mut self.datasets {
            fix(&mut d.path);
        }
    }

    pub fn enabled(&self, metric: Metric) -> bool {
        self.metrics.contains(&metric)
    }

    pub fn classifier_judges(&self) -> &[String] {
        self.classifier_judges.as_deref().unwrap_or(&self.judges)
    }

    pub fn accuracy_judge(&self) -> Option<&str> {
        self.accuracy_judge.as_deref().or(self.judges.first().map(String::as_str))
    }

    pub fn cache_file(&self) -> PathBuf {
        self.cache_path
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache.jsonl"))
    }

    /// Cache for simulated runs, kept apart so mock replies never answer
    /// live requests for the same model id.
    pub fn mock_cache_file(&self) -> PathBuf {
        let live = self.cache_file();
        let stem = live.file_stem().and_then(|s| s.to_str()).unwrap_or("cache");
        live.with_file_name(format!("{stem}.mock.jsonl"))
    }

    pub fn temperature_table(&self) -> TemperatureTable {
        TemperatureTable {
            overrides: self.temperatures.clone(),
        }
    }

    pub fn embedding_settings(&self) -> EmbeddingSettings {
        EmbeddingSettings {
            model: self.embedding.model.clone(),
            dimension: self.embedding.dimension,
            max_chars: self.embedding.max_chars,
        }
    }

    /// Strategies in display order.
    pub fn strategy_specs(&self) -> Result<Vec<StrategySpec>> {
        let all = default_strategies(self.k);
        match &self.strategies {
            None => Ok(all),
            Some(labels) => labels
                .iter()
                .map(|l| {
                    all.iter()
                        .find(|s| s.label() == *l)
                        .copied()
                        .ok_or_else(|| Error::Config(format!("unknown strategy {l:?}")))
                })
                .collect(),
        }
    }

    /// Every problem with the config, or `Ok` when there are none. Dataset
    /// files are opened to check that they parse and, for accuracy, carry
    /// gold answers.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.datasets.is_empty() {
            errors.push("at least one dataset is required".to_string());
        }
        let mut names = BTreeSet::new();
        let mut any_gold = false;
        for d in &self.datasets {
            if !names.insert(d.name.as_str()) {
                errors.push(format!("duplicate dataset name {:?}", d.name));
            }
            if d.name.trim().is_empty() {
                errors.push("dataset name must not be empty".into());
            }
            let Some(format) = d.input_format() else {
                errors.push(format!("dataset {:?}: cannot infer format of {}", d.name, d.path.display()));
                continue;
            };
            if d.count == Some(0) {
                errors.push(format!("dataset {:?}: count must be positive", d.name));
            }
            if d.stratum.is_some() && d.count.is_none() {
                errors.push(format!("dataset {:?}: stratum requires count", d.name));
            }
            match crate::datasets::load_prompts(&d.path, format, &d.name) {
                Ok(records) => {
                    any_gold |= records.iter().any(|r| r.gold_answer.is_some());
                    if let Some(plan) = d.plan() {
                        if let Err(e) = crate::datasets::seeded_subsample(&records, &plan) {
                            errors.push(format!("dataset {:?}: {e}", d.name));
                        }
                    }
                }
                Err(e) => errors.push(format!("dataset {:?}: {e}", d.name)),
            }
        }
        if self.models.is_empty() {
            errors.push("at least one generation model is required".into());
        }
        if self.k == 0 {
            errors.push("k must be positive".into());
        }
        let pairwise = [Metric::Functional, Metric::Vocabulary, Metric::Embedding]
            .into_iter()
            .any(|m| self.enabled(m));
        if pairwise && self.k < 2 {
            errors.push("diversity metrics need k >= 2".into());
        }
        if self.metrics.is_empty() {
            errors.push("no metrics enabled".into());
        }
        let unique: BTreeSet<_> = self.metrics.iter().collect();
        if unique.len() != self.metrics.len() {
            errors.push("metrics listed more than once".into());
        }
        if (self.enabled(Metric::Functional) || self.enabled(Metric::Checklist)) && self.judges.is_empty() {
            errors.push("functional and checklist metrics need at least one judge".into());
        }
        let cj = self.classifier_judges();
        if !cj.is_empty() && cj.len().is_multiple_of(2) {
            errors.push(format!("classifier judges must be an odd number, got {}", cj.len()));
        }
        if self.enabled(Metric::Accuracy) {
            if self.accuracy_judge().is_none() {
                errors.push("accuracy metric needs a judge".into());
            }
            if !self.datasets.is_empty() && !any_gold {
                errors.push("accuracy metric needs gold answers in at least one dataset".into());
            }
        }
        if self.enabled(Metric::Reward) && self.reward_endpoint.as_deref().is_none_or(|u| u.trim().is_empty()) {
            errors.push("reward metric needs reward_endpoint".into());
        }
        match &self.strategies {
            Some(labels) if labels.is_empty() => errors.push("strategies list is empty".into()),
            Some(labels) => {
                let known: Vec<String> = default_strategies(self.k.max(1)).iter().map(StrategySpec::label).collect();
                let mut seen = BTreeSet::new();
                for l in labels {
                    if !known.contains(l) {
                        errors.push(format!("unknown strategy {l:?} (known: {})", known.join(", ")));
                    }
                    if !seen.insert(l) {
                        errors.push(format!("strategy {l:?} listed twice"));
                    }
                }
            }
            None => {}
        }
        for (model, levels) in &self.temperatures {
            if levels.iter().any(|t| !t.is_finite() || *t < 0.0) {
                errors.push(format!("temperatures for {model:?} must be finite and non-negative"));
            }
        }
        if !(0.0..=1.0).contains(&self.abort_threshold) {
            errors.push("abort_threshold must be within [0, 1]".into());
        }
        if self.embedding.dimension == 0 || self.embedding.max_chars == 0 {
            errors.push("embedding dimension and max_chars must be positive".into());
        }
        if self.max_in_flight == Some(0) {
            errors.push("max_in_flight must be positive".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errors))
        }
    }

    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}

impl FromStr for RunConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Client over the simulated model and a bag-of-words embedder.
pub fn mock_client(config: &RunConfig) -> Result<Client> {
    let settings = EmbeddingSettings {
        model: "mock-embedding".into(),
        dimension: MOCK_EMBEDDING_DIMENSION,
        max_chars: config.embedding.max_chars,
    };
    finish_client(
        config,
        &config.mock_cache_file(),
        Client::new(Arc::new(SimulatedLlm::new())).with_embedder(Arc::new(MockEmbedder::bag_of_words()), settings),
    )
}

/// Client over the vendor HTTP APIs, keyed from the environment.
pub fn http_client(config: &RunConfig) -> Result<Client> {
    finish_client(
        config,
        &config.cache_file(),
        Client::new(Arc::new(HttpRouter::from_env()))
            .with_embedder(Arc::new(HttpEmbedder::from_env()), config.embedding_settings()),
    )
}

fn finish_client(config: &RunConfig, path: &Path, client: Client) -> Result<Client> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let cache = ResponseCache::open(path)?;
    let client = client.with_cache(Arc::new(cache));
    Ok(match config.max_in_flight {
        Some(n) => client.with_max_in_flight(n),
        None => client,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Classify,
    Sample,
    Diversity,
    Quality,
    Aggregate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Classify,
        Stage::Sample,
        Stage::Diversity,
        Stage::Quality,
        Stage::Aggregate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Classify => "classify",
            Stage::Sample => "sample",
            Stage::Diversity => "diversity",
            Stage::Quality => "quality",
            Stage::Aggregate => "aggregate",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMarker {
    pub completed_at: String,
    pub config_digest: String,
    pub records: usize,
    pub failed_prompts: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CallCounts {
    pub network_calls: u64,
    pub cache_hits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact_version: String,
    pub config: RunConfig,
    pub config_digest: String,
    pub template_digests: BTreeMap<String, String>,
    pub created_at: String,
    pub updated_at: String,
    pub stages: BTreeMap<Stage, StageMarker>,
    /// Provider traffic of the most recent invocation.
    pub last_invocation: CallCounts,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl RunManifest {
    pub fn new(config: &RunConfig) -> Self {
        let ts = now();
        RunManifest {
            schema_version: SCHEMA_VERSION,
            artifact_version: ARTIFACT_VERSION.to_string(),
            config: config.clone(),
            config_digest: String::new(),
            template_digests: template::asset_digests(),
            created_at: ts.clone(),
            updated_at: ts,
            stages: BTreeMap::new(),
            last_invocation: CallCounts::default(),
        }
    }

    pub fn load(output_dir: &Path) -> Result<Option<RunManifest>> {
        let path = output_dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    pub fn save(&self, output_dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&output_dir.join(MANIFEST_FILE), text.as_bytes())
    }

    /// True when `stage` completed under the same config and templates.
    pub fn is_complete(&self, stage: Stage, config_digest: &str) -> bool {
        self.stages
            .get(&stage)
            .is_some_and(|m| m.config_digest == config_digest)
            && self.template_digests == template::asset_digests()
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes one JSON object per line, each with a `schema_version` field.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = BufWriter::new(Vec::new());
    for r in records {
        let mut value = serde_json::to_value(r)?;
        match value.as_object_mut() {
            Some(obj) => {
                obj.insert("schema_version".into(), Value::from(SCHEMA_VERSION));
            }
            None => return Err(Error::precondition("JSONL records must be objects")),
        }
        serde_json::to_writer(&mut buf, &value)?;
        buf.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    let bytes = buf.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Reads records written by [`write_jsonl`], rejecting newer schema versions.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| Error::Schema {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let mut value: Value = serde_json::from_str(&line).map_err(|e| schema(e.to_string()))?;
        let version = value
            .as_object_mut()
            .and_then(|o| o.remove("schema_version"))
            .and_then(|v| v.as_u64());
        match version {
            Some(v) if v <= SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(schema(format!("schema_version {v} is newer than {SCHEMA_VERSION}"))),
            None => return Err(schema("missing schema_version".into())),
        }
        out.push(serde_json::from_value(value).map_err(|e| schema(e.to_string()))?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Stages to execute, run in pipeline order.
    pub stages: Vec<Stage>,
    /// Skip stages already completed under the same config.
    pub resume: bool,
    /// Distinguishes stage markers of runs against different backends
    /// (for example simulated versus live) in the same output directory.
    pub backend: String,
}

impl RunOptions {
    pub fn all() -> Self {
        RunOptions::stages(&Stage::ALL)
    }

    pub fn stages(stages: &[Stage]) -> Self {
        RunOptions {
            stages: stages.to_vec(),
            resume: false,
            backend: "live".into(),
        }
    }

    pub fn backend(mut self, backend: impl Into<String>) -> Self {
        self.backend = backend.into();
        self
    }

    pub fn resume(mut self, resume: bool) -> Self {
        self.resume = resume;
        self
    }
}

/// Executes the requested stages and returns the updated manifest.
pub fn run_pipeline(config: &RunConfig, client: &Client, options: &RunOptions) -> Result<RunManifest> {
    config.validate()?;
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let digest = format!("{}:{}", config.digest(), options.backend);
    let mut manifest = match RunManifest::load(out)? {
        Some(m) if m.config_digest == digest => m,
        Some(_) => {
            tracing::info!("config changed since the last run; stage markers reset");
            RunManifest::new(config)
        }
        None => RunManifest::new(config),
    };
    manifest.config_digest = digest.clone();
    manifest.template_digests = template::asset_digests();
    let calls_before = (client.network_calls(), client.cache_hits());

    let mut requested: Vec<Stage> = options.stages.clone();
    requested.sort();
    requested.dedup();
    for stage in requested {
        if options.resume && manifest.is_complete(stage, &digest) {
            tracing::info!(%stage, "already complete, skipping");
            continue;
        }
        // A rerun stage invalidates everything downstream of it.
        manifest.stages.retain(|s, _| *s < stage);
        tracing::info!(%stage, "running");
        let outcome = stages::run_stage(stage, config, client);
        manifest.updated_at = now();
        manifest.last_invocation = CallCounts {
            network_calls: client.network_calls() - calls_before.0,
            cache_hits: client.cache_hits() - calls_before.1,
        };
        let summary = match outcome {
            Ok(summary) => summary,
            Err(e) => {
                manifest.save(out)?;
                return Err(e);
            }
        };
        manifest.stages.insert(
            stage,
            StageMarker {
                completed_at: now(),
                config_digest: digest.clone(),
                records: summary.records,
                failed_prompts: summary.failed_prompts,
            },
        );
        manifest.save(out)?;
    }
    manifest.last_invocation = CallCounts {
        network_calls: client.network_calls() - calls_before.0,
        cache_hits: client.cache_hits() - calls_before.1,
    };
    manifest.save(out)?;
    Ok(manifest)
}

/// Canonical file names inside the output directory.
pub mod files {
    pub const PROMPTS: &str = "prompts.jsonl";
    pub const CLASSIFICATIONS: &str = "classifications.jsonl";
    pub const RESPONSE_SETS: &str = "response_sets.jsonl";
    pub const PAIR_JUDGMENTS: &str = "pair_judgments.jsonl";
    pub const DIVERSITY_METRICS: &str = "diversity_metrics.jsonl";
    pub const CHECKLISTS: &str = "checklists.jsonl";
    pub const GRADES: &str = "grades.jsonl";
    pub const ACCURACY: &str = "accuracy.jsonl";
    pub const QUALITY_METRICS: &str = "quality_metrics.jsonl";
    pub const CELLS: &str = "cells.jsonl";
    pub const SIGNIFICANCE: &str = "significance.jsonl";
    pub const TABLES_DIR: &str = "tables";
    pub const PLOTS_DIR: &str = "plots";

    pub fn failures(stage: super::Stage) -> String {
        format!("failures_{}.jsonl", stage.name())
    }
}
