use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{files, read_jsonl, report, write_jsonl, Metric, RunConfig, Stage};
use crate::datasets::{load_prompts, seeded_subsample, PromptRecord};
use crate::diversity::{self, PairJudgment};
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::providers::Client;
use crate::quality::{self, AccuracyVerdict, Checklist, QualityGrade};
use crate::sampling::{ResponseSet, Sampler, StrategyKind, Variant};
use crate::stats::{self, Comparison, MetricRecord};
use crate::taxonomy::{self, ClassificationResult, TaskCategory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub stage: Stage,
    pub prompt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    pub error: String,
    /// Responses obtained before a sampling failure.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub partial: Vec<String>,
}

impl FailureRecord {
    fn new(stage: Stage, prompt_id: &str, error: &Error) -> Self {
        let partial = match error {
            Error::PartialSet { completed, .. } => completed.clone(),
            _ => Vec::new(),
        };
        FailureRecord {
            stage,
            prompt_id: prompt_id.to_string(),
            model: None,
            strategy: None,
            error: error.to_string(),
            partial,
        }
    }

    fn on_set(mut self, model: &str, strategy: &str) -> Self {
        self.model = Some(model.to_string());
        self.strategy = Some(strategy.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairJudgmentRecord {
    pub prompt_id: String,
    pub model: String,
    pub strategy: String,
    #[serde(flatten)]
    pub judgment: PairJudgment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeRecord {
    pub model: String,
    pub strategy: String,
    #[serde(flatten)]
    pub grade: QualityGrade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRecord {
    pub model: String,
    pub strategy: String,
    #[serde(flatten)]
    pub verdict: AccuracyVerdict,
}

/// Metric values for one response set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetMetrics {
    pub prompt_id: String,
    pub model: String,
    pub strategy: String,
    pub category: TaskCategory,
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_judge_counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excluded_judges: Vec<String>,
}

impl SetMetrics {
    fn for_set(set: &ResponseSet, category: TaskCategory) -> Self {
        SetMetrics {
            prompt_id: set.prompt_id.clone(),
            model: set.model_id.clone(),
            strategy: set.strategy.label(),
            category,
            values: BTreeMap::new(),
            per_judge_counts: BTreeMap::new(),
            excluded_judges: Vec::new(),
        }
    }

    fn records(&self) -> impl Iterator<Item = MetricRecord> + '_ {
        self.values.iter().map(|(metric, value)| MetricRecord {
            prompt_id: self.prompt_id.clone(),
            model: self.model.clone(),
            strategy: self.strategy.clone(),
            category: self.category,
            metric: metric.clone(),
            value: *value,
        })
    }
}

pub(super) struct StageSummary {
    pub records: usize,
    pub failed_prompts: usize,
}

pub(super) fn run_stage(stage: Stage, config: &RunConfig, client: &Client) -> Result<StageSummary> {
    match stage {
        Stage::Ingest => ingest(config),
        Stage::Classify => classify(config, client),
        Stage::Sample => sample(config, client),
        Stage::Diversity => diversity_stage(config, client),
        Stage::Quality => quality_stage(config, client),
        Stage::Aggregate => aggregate(config),
        Stage::Report => report_stage(config),
    }
}

fn input<T: serde::de::DeserializeOwned>(config: &RunConfig, file: &str, producer: Stage) -> Result<Vec<T>> {
    let path = config.output_dir.join(file);
    if !path.exists() {
        return Err(Error::Config(format!(
            "{} not found; run the {producer} stage first",
            path.display()
        )));
    }
    read_jsonl(&path)
}

fn finish(
    config: &RunConfig,
    stage: Stage,
    failures: &[FailureRecord],
    total_prompts: usize,
    records: usize,
) -> Result<StageSummary> {
    write_jsonl(&config.output_dir.join(files::failures(stage)), failures)?;
    let failed: BTreeSet<&str> = failures.iter().map(|f| f.prompt_id.as_str()).collect();
    for f in failures {
        tracing::warn!(%stage, prompt = %f.prompt_id, model = ?f.model, strategy = ?f.strategy, "{}", f.error);
    }
    if total_prompts > 0 && failed.len() as f64 / total_prompts as f64 > config.abort_threshold {
        return Err(Error::StageAborted {
            stage: stage.name().to_string(),
            failed: failed.len(),
            total: total_prompts,
            threshold: config.abort_threshold,
        });
    }
    Ok(StageSummary {
        records,
        failed_prompts: failed.len(),
    })
}

fn ingest(config: &RunConfig) -> Result<StageSummary> {
    let mut all = Vec::new();
    let mut seen = BTreeSet::new();
    for d in &config.datasets {
        let format = d
            .input_format()
            .ok_or_else(|| Error::Config(format!("cannot infer format of {}", d.path.display())))?;
        let records = load_prompts(&d.path, format, &d.name)?;
        let kept = match d.plan() {
            Some(plan) => seeded_subsample(&records, &plan)?,
            None => records,
        };
        for r in kept {
            if !seen.insert(r.id.clone()) {
                return Err(Error::Config(format!("prompt id {:?} appears in more than one dataset", r.id)));
            }
            all.push(r);
        }
    }
    write_jsonl(&config.output_dir.join(files::PROMPTS), &all)?;
    finish(config, Stage::Ingest, &[], all.len(), all.len())
}

fn classify(config: &RunConfig, client: &Client) -> Result<StageSummary> {
    let prompts: Vec<PromptRecord> = input(config, files::PROMPTS, Stage::Ingest)?;
    let judges = config.classifier_judges();
    let outcomes = exec::map(config.mode, &prompts, |p| {
        taxonomy::classify(client, p, judges, ExecMode::Sequential)
    });
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (p, outcome) in prompts.iter().zip(outcomes) {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => failures.push(FailureRecord::new(Stage::Classify, &p.id, &e)),
        }
    }
    write_jsonl(&config.output_dir.join(files::CLASSIFICATIONS), &results)?;
    finish(config, Stage::Classify, &failures, prompts.len(), results.len())
}

fn sample(config: &RunConfig, client: &Client) -> Result<StageSummary> {
    let prompts: Vec<PromptRecord> = input(config, files::PROMPTS, Stage::Ingest)?;
    let classes: Vec<ClassificationResult> = input(config, files::CLASSIFICATIONS, Stage::Classify)?;
    let category: HashMap<&str, TaskCategory> =
        classes.iter().map(|c| (c.prompt_id.as_str(), c.final_category)).collect();
    let strategies = config.strategy_specs()?;
    let temperatures = config.temperature_table();
    let sampler = Sampler::new(client, &temperatures, ExecMode::Sequential);

    let mut jobs = Vec::new();
    for p in prompts.iter().filter(|p| category.contains_key(p.id.as_str())) {
        for model in &config.models {
            for s in &strategies {
                jobs.push((p, model.as_str(), s));
            }
        }
    }
    let outcomes = exec::map(config.mode, &jobs, |(p, model, s)| {
        sampler.sample(p, model, s, Some(category[p.id.as_str()]))
    });
    let mut sets = Vec::new();
    let mut failures = Vec::new();
    for ((p, model, s), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(set) => sets.push(set),
            Err(e) => failures.push(FailureRecord::new(Stage::Sample, &p.id, &e).on_set(model, &s.label())),
        }
    }
    write_jsonl(&config.output_dir.join(files::RESPONSE_SETS), &sets)?;
    finish(config, Stage::Sample, &failures, category.len(), sets.len())
}

fn prompt_index(prompts: &[PromptRecord]) -> HashMap<&str, &PromptRecord> {
    prompts.iter().map(|p| (p.id.as_str(), p)).collect()
}

fn set_category(set: &ResponseSet) -> Result<TaskCategory> {
    set.category
        .ok_or_else(|| Error::precondition(format!("response set for {} has no category", set.prompt_id)))
}

fn distinct_prompts(sets: &[ResponseSet]) -> usize {
    sets.iter().map(|s| s.prompt_id.as_str()).collect::<BTreeSet<_>>().len()
}

fn diversity_stage(config: &RunConfig, client: &Client) -> Result<StageSummary> {
    let prompts: Vec<PromptRecord> = input(config, files::PROMPTS, Stage::Ingest)?;
    let sets: Vec<ResponseSet> = input(config, files::RESPONSE_SETS, Stage::Sample)?;
    let by_id = prompt_index(&prompts);

    let outcomes = exec::map(config.mode, &sets, |set| -> Result<(SetMetrics, Vec<PairJudgment>)> {
        let category = set_category(set)?;
        let prompt = by_id
            .get(set.prompt_id.as_str())
            .ok_or_else(|| Error::precondition(format!("unknown prompt {}", set.prompt_id)))?;
        let mut m = SetMetrics::for_set(set, category);
        let mut judgments = Vec::new();
        if config.enabled(Metric::Vocabulary) {
            m.values.insert(
                Metric::Vocabulary.record_name().into(),
                diversity::mean_vocabulary_diversity(&set.responses)?,
            );
        }
        if config.enabled(Metric::Embedding) {
            let vectors = client.embed(&set.responses)?;
            m.values.insert(
                Metric::Embedding.record_name().into(),
                diversity::mean_embedding_diversity(&vectors)?,
            );
        }
        if config.enabled(Metric::Functional) {
            let score = diversity::functional_diversity_score(
                client,
                &prompt.text,
                category,
                &set.responses,
                &config.judges,
                config.functional_aggregation,
                ExecMode::Sequential,
            )?;
            m.values.insert(Metric::Functional.record_name().into(), score.mean_count);
            m.per_judge_counts = score.per_judge_counts;
            m.excluded_judges = score.excluded_judges;
            judgments = score.judgments;
        }
        Ok((m, judgments))
    });

    let mut metrics = Vec::new();
    let mut pair_records = Vec::new();
    let mut failures = Vec::new();
    for (set, outcome) in sets.iter().zip(outcomes) {
        match outcome {
            Ok((m, judgments)) => {
                pair_records.extend(judgments.into_iter().map(|judgment| PairJudgmentRecord {
                    prompt_id: set.prompt_id.clone(),
                    model: set.model_id.clone(),
                    strategy: set.strategy.label(),
                    judgment,
                }));
                metrics.push(m);
            }
            Err(e) => failures.push(
                FailureRecord::new(Stage::Diversity, &set.prompt_id, &e).on_set(&set.model_id, &set.strategy.label()),
            ),
        }
    }
    write_jsonl(&config.output_dir.join(files::PAIR_JUDGMENTS), &pair_records)?;
    write_jsonl(&config.output_dir.join(files::DIVERSITY_METRICS), &metrics)?;
    finish(config, Stage::Diversity, &failures, distinct_prompts(&sets), metrics.len())
}

enum QualityJob<'a> {
    Grade {
        set: &'a ResponseSet,
        index: usize,
        checklist: &'a Checklist,
    },
    Accuracy {
        set: &'a ResponseSet,
        index: usize,
        gold: &'a str,
        judge: &'a str,
    },
    Reward {
        set: &'a ResponseSet,
        index: usize,
        endpoint: &'a str,
    },
}

enum QualityOutcome {
    Grade(QualityGrade),
    Accuracy(AccuracyVerdict),
    Reward(f64),
}

fn quality_stage(config: &RunConfig, client: &Client) -> Result<StageSummary> {
    let prompts: Vec<PromptRecord> = input(config, files::PROMPTS, Stage::Ingest)?;
    let sets: Vec<ResponseSet> = input(config, files::RESPONSE_SETS, Stage::Sample)?;
    let by_id = prompt_index(&prompts);
    let mut failures = Vec::new();

    // Checklists: once per (prompt, judge), shared by every model and strategy.
    let sampled: Vec<&PromptRecord> = prompts
        .iter()
        .filter(|p| sets.iter().any(|s| s.prompt_id == p.id))
        .collect();
    let mut checklists: Vec<Checklist> = Vec::new();
    if config.enabled(Metric::Checklist) {
        let jobs: Vec<(&PromptRecord, &String)> = sampled
            .iter()
            .flat_map(|p| config.judges.iter().map(move |j| (*p, j)))
            .collect();
        let outcomes = exec::map(config.mode, &jobs, |(p, judge)| {
            quality::generate_checklist(client, &p.id, &p.text, judge)
        });
        for ((p, judge), outcome) in jobs.iter().zip(outcomes) {
            match outcome {
                Ok(c) => checklists.push(c),
                Err(e) => {
                    let mut f = FailureRecord::new(Stage::Quality, &p.id, &e);
                    f.model = Some(judge.to_string());
                    failures.push(f);
                }
            }
        }
    }

    let mut jobs = Vec::new();
    for set in &sets {
        let Some(prompt) = by_id.get(set.prompt_id.as_str()) else { continue };
        for index in 0..set.responses.len() {
            for checklist in checklists.iter().filter(|c| c.prompt_id == set.prompt_id) {
                jobs.push(QualityJob::Grade { set, index, checklist });
            }
            if config.enabled(Metric::Accuracy) {
                if let (Some(gold), Some(judge)) = (prompt.gold_answer.as_deref(), config.accuracy_judge()) {
                    jobs.push(QualityJob::Accuracy { set, index, gold, judge });
                }
            }
            if config.enabled(Metric::Reward) {
                if let Some(endpoint) = config.reward_endpoint.as_deref() {
                    jobs.push(QualityJob::Reward { set, index, endpoint });
                }
            }
        }
    }
    let outcomes = exec::map(config.mode, &jobs, |job| -> Result<QualityOutcome> {
        match job {
            QualityJob::Grade { set, index, checklist } => {
                let prompt = by_id[set.prompt_id.as_str()];
                quality::grade_with_checklist(
                    client,
                    &prompt.text,
                    &set.responses[*index],
                    *index,
                    checklist,
                    &checklist.judge_model,
                )
                .map(QualityOutcome::Grade)
            }
            QualityJob::Accuracy { set, index, gold, judge } => {
                let prompt = by_id[set.prompt_id.as_str()];
                quality::grade_accuracy(client, &prompt.id, &prompt.text, gold, &set.responses[*index], *index, judge)
                    .map(QualityOutcome::Accuracy)
            }
            QualityJob::Reward { set, index, endpoint } => {
                let prompt = by_id[set.prompt_id.as_str()];
                quality::score_external_reward(&prompt.text, &set.responses[*index], Some(endpoint))
                    .map(QualityOutcome::Reward)
            }
        }
    });

    let key = |s: &ResponseSet| (s.prompt_id.clone(), s.model_id.clone(), s.strategy.label());
    let mut grades = Vec::new();
    let mut verdicts = Vec::new();
    let mut scores: HashMap<(String, String, String), [Vec<f64>; 3]> = HashMap::new();
    for (job, outcome) in jobs.iter().zip(outcomes) {
        let set = match job {
            QualityJob::Grade { set, .. } | QualityJob::Accuracy { set, .. } | QualityJob::Reward { set, .. } => *set,
        };
        let slot = scores.entry(key(set)).or_default();
        match outcome {
            Ok(QualityOutcome::Grade(g)) => {
                slot[0].push(g.score as f64);
                grades.push(GradeRecord {
                    model: set.model_id.clone(),
                    strategy: set.strategy.label(),
                    grade: g,
                });
            }
            Ok(QualityOutcome::Accuracy(v)) => {
                if let Some(c) = v.correct {
                    slot[1].push(if c { 1.0 } else { 0.0 });
                }
                verdicts.push(AccuracyRecord {
                    model: set.model_id.clone(),
                    strategy: set.strategy.label(),
                    verdict: v,
                });
            }
            Ok(QualityOutcome::Reward(r)) => slot[2].push(r),
            Err(e) => failures.push(
                FailureRecord::new(Stage::Quality, &set.prompt_id, &e).on_set(&set.model_id, &set.strategy.label()),
            ),
        }
    }

    let names = [Metric::Checklist, Metric::Accuracy, Metric::Reward].map(Metric::record_name);
    let mut metrics = Vec::new();
    for set in &sets {
        let Some(slots) = scores.get(&key(set)) else { continue };
        let mut m = SetMetrics::for_set(set, set_category(set)?);
        for (name, values) in names.iter().zip(slots) {
            if !values.is_empty() {
                m.values.insert(name.to_string(), values.iter().sum::<f64>() / values.len() as f64);
            }
        }
        if !m.values.is_empty() {
            metrics.push(m);
        }
    }
    let out = &config.output_dir;
    write_jsonl(&out.join(files::CHECKLISTS), &checklists)?;
    write_jsonl(&out.join(files::GRADES), &grades)?;
    write_jsonl(&out.join(files::ACCURACY), &verdicts)?;
    write_jsonl(&out.join(files::QUALITY_METRICS), &metrics)?;
    failures.sort_by(|a, b| a.prompt_id.cmp(&b.prompt_id));
    finish(config, Stage::Quality, &failures, sampled.len(), metrics.len())
}

/// Metric records from whichever metric stages have run.
pub(super) fn metric_records(output_dir: &Path) -> Result<Vec<MetricRecord>> {
    let mut out = Vec::new();
    for file in [files::DIVERSITY_METRICS, files::QUALITY_METRICS] {
        let path = output_dir.join(file);
        if path.exists() {
            let sets: Vec<SetMetrics> = read_jsonl(&path)?;
            out.extend(sets.iter().flat_map(SetMetrics::records));
        }
    }
    Ok(out)
}

fn aggregate(config: &RunConfig) -> Result<StageSummary> {
    let records = metric_records(&config.output_dir)?;
    if records.is_empty() {
        return Err(Error::Config("no metric records; run the diversity or quality stage first".into()));
    }
    let cells = stats::aggregate(&records);
    let specs = config.strategy_specs()?;
    let metrics: BTreeSet<&str> = records.iter().map(|r| r.metric.as_str()).collect();
    let mut comparisons: Vec<Comparison> = Vec::new();
    for model in &config.models {
        for metric in &metrics {
            for kind in [StrategyKind::SystemPrompt, StrategyKind::InContextRegeneration] {
                let find = |v: Variant| specs.iter().find(|s| s.kind == kind && s.variant == v).map(|s| s.label());
                if let (Some(t), Some(b)) = (find(Variant::TaskAnchored), find(Variant::General)) {
                    comparisons.extend(stats::compare_strategies(&records, model, metric, &t, &b));
                }
            }
        }
    }
    write_jsonl(&config.output_dir.join(files::CELLS), &cells)?;
    write_jsonl(&config.output_dir.join(files::SIGNIFICANCE), &comparisons)?;
    Ok(StageSummary {
        records: cells.len(),
        failed_prompts: 0,
    })
}

fn report_stage(config: &RunConfig) -> Result<StageSummary> {
    let cells: Vec<stats::AggregateCell> = input(config, files::CELLS, Stage::Aggregate)?;
    let comparisons: Vec<Comparison> = input(config, files::SIGNIFICANCE, Stage::Aggregate)?;
    let mut written = report::emit_tables(config, &cells, report::TableFormat::Csv)?;
    written.extend(report::emit_tables(config, &cells, report::TableFormat::Markdown)?);
    written.push(report::emit_significance(config, &comparisons)?);
    written.extend(report::emit_plots(config, &cells)?);
    Ok(StageSummary {
        records: written.len(),
        failed_prompts: 0,
    })
}
