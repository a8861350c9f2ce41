//! Multi-response sampling: temperature sampling, system-prompt sampling
//! and in-context regeneration, each general or task-anchored.

mod split;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use split::{join_numbered_responses, split_numbered_responses};

use crate::datasets::PromptRecord;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::providers::{ChatRequest, Client, Message};
use crate::taxonomy::TaskCategory;
use crate::template;

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Temperature,
    SystemPrompt,
    InContextRegeneration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    General,
    TaskAnchored,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureLevel {
    Low,
    Medium,
    High,
    #[serde(rename = "n/a")]
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub variant: Variant,
    pub temperature_level: TemperatureLevel,
    pub k: usize,
}

impl StrategySpec {
    pub fn temperature(level: TemperatureLevel, k: usize) -> Self {
        StrategySpec {
            kind: StrategyKind::Temperature,
            variant: Variant::None,
            temperature_level: level,
            k,
        }
    }

    pub fn system_prompt(variant: Variant, k: usize) -> Self {
        StrategySpec {
            kind: StrategyKind::SystemPrompt,
            variant,
            temperature_level: TemperatureLevel::Medium,
            k,
        }
    }

    pub fn regeneration(variant: Variant, k: usize) -> Self {
        StrategySpec {
            kind: StrategyKind::InContextRegeneration,
            variant,
            temperature_level: TemperatureLevel::Medium,
            k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        let ok = match self.kind {
            StrategyKind::Temperature => {
                self.variant == Variant::None && self.temperature_level != TemperatureLevel::NotApplicable
            }
            _ => {
                matches!(self.variant, Variant::General | Variant::TaskAnchored)
                    && self.temperature_level == TemperatureLevel::Medium
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("inconsistent strategy {self:?}")))
        }
    }

    /// Stable identifier used as a key in records and tables.
    pub fn label(&self) -> String {
        match self.kind {
            StrategyKind::Temperature => {
                let level = match self.temperature_level {
                    TemperatureLevel::Low => "low",
                    TemperatureLevel::Medium => "medium",
                    TemperatureLevel::High => "high",
                    TemperatureLevel::NotApplicable => "n/a",
                };
                format!("temperature_{level}")
            }
            StrategyKind::SystemPrompt | StrategyKind::InContextRegeneration => {
                let kind = if self.kind == StrategyKind::SystemPrompt {
                    "system_prompt"
                } else {
                    "in_context_regeneration"
                };
                let variant = match self.variant {
                    Variant::TaskAnchored => "task_anchored",
                    _ => "general",
                };
                format!("{kind}_{variant}")
            }
        }
    }

    pub fn is_task_anchored(&self) -> bool {
        self.variant == Variant::TaskAnchored
    }
}

impl fmt::Display for StrategySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// The seven strategies compared per model: three temperatures, then the
/// general and task-anchored forms of both prompt-based methods.
pub fn default_strategies(k: usize) -> Vec<StrategySpec> {
    vec![
        StrategySpec::temperature(TemperatureLevel::Low, k),
        StrategySpec::temperature(TemperatureLevel::Medium, k),
        StrategySpec::temperature(TemperatureLevel::High, k),
        StrategySpec::regeneration(Variant::General, k),
        StrategySpec::regeneration(Variant::TaskAnchored, k),
        StrategySpec::system_prompt(Variant::General, k),
        StrategySpec::system_prompt(Variant::TaskAnchored, k),
    ]
}

/// Per-model (low, medium, high) temperatures.
///
/// Claude models default to (0.0, 0.5, 1.0); everything else to (0.0, 1.0, 2.0).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TemperatureTable {
    #[serde(default)]
    pub overrides: BTreeMap<String, [f64; 3]>,
}

impl TemperatureTable {
    pub fn levels(&self, model_id: &str) -> [f64; 3] {
        if let Some(levels) = self.overrides.get(model_id) {
            return *levels;
        }
        if model_id.to_ascii_lowercase().contains("claude") {
            [0.0, 0.5, 1.0]
        } else {
            [0.0, 1.0, 2.0]
        }
    }

    pub fn resolve(&self, model_id: &str, level: TemperatureLevel) -> Result<f64> {
        let [low, medium, high] = self.levels(model_id);
        match level {
            TemperatureLevel::Low => Ok(low),
            TemperatureLevel::Medium => Ok(medium),
            TemperatureLevel::High => Ok(high),
            TemperatureLevel::NotApplicable => {
                Err(Error::Config("temperature level n/a cannot be resolved".into()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorMethod {
    SystemPrompt,
    Regeneration,
}

/// The category-specific instruction for one method, with `{num_responses}`
/// left in place for system prompts.
pub fn render_task_anchored_instruction(category: TaskCategory, method: AnchorMethod) -> Result<&'static str> {
    let dir = match method {
        AnchorMethod::SystemPrompt => "system",
        AnchorMethod::Regeneration => "regeneration",
    };
    template::asset(&format!("sampling/{dir}/{}.txt", category.code())).ok_or_else(|| {
        Error::Config(format!("no task-anchored {dir} instruction for category {category}"))
    })
}

fn require_category(variant: Variant, category: Option<TaskCategory>) -> Result<Option<TaskCategory>> {
    match (variant, category) {
        (Variant::TaskAnchored, None) => Err(Error::precondition("task-anchored sampling needs a category")),
        (Variant::None, _) => Err(Error::precondition("prompt-based sampling needs a general or task-anchored variant")),
        (_, c) => Ok(c),
    }
}

/// Full system text for system-prompt sampling of `k` responses.
pub fn render_system_prompt(variant: Variant, category: Option<TaskCategory>, k: usize) -> Result<String> {
    let n = k.to_string();
    match require_category(variant, category)? {
        Some(category) if variant == Variant::TaskAnchored => {
            let cell = template::render(
                render_task_anchored_instruction(category, AnchorMethod::SystemPrompt)?,
                &[("num_responses", &n)],
            )?;
            template::render(
                template::required_asset("sampling/system_task_anchored.txt")?,
                &[("Task-Anchored System Prompt", &cell), ("num_responses", &n)],
            )
        }
        _ => template::render(
            template::required_asset("sampling/system_general.txt")?,
            &[("num_responses", &n)],
        ),
    }
}

/// The user turn that asks for one more, different, response.
pub fn render_regeneration_turn(variant: Variant, category: Option<TaskCategory>, prompt_text: &str) -> Result<String> {
    match require_category(variant, category)? {
        Some(category) if variant == Variant::TaskAnchored => template::render(
            template::required_asset("sampling/regeneration_task_anchored.txt")?,
            &[
                (
                    "Task-Anchored In-Context Regeneration Prompt",
                    render_task_anchored_instruction(category, AnchorMethod::Regeneration)?,
                ),
                ("prompt", prompt_text),
            ],
        ),
        _ => Ok(template::required_asset("sampling/regeneration_general.txt")?.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request: ChatRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default)]
    pub cached: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub prompt_id: String,
    pub model_id: String,
    pub strategy: StrategySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<TaskCategory>,
    pub responses: Vec<String>,
    pub raw_transcript: Vec<TranscriptEntry>,
}

/// Issues sampling requests for one prompt at a time.
pub struct Sampler<'a> {
    client: &'a Client,
    temperatures: &'a TemperatureTable,
    mode: ExecMode,
}

impl<'a> Sampler<'a> {
    pub fn new(client: &'a Client, temperatures: &'a TemperatureTable, mode: ExecMode) -> Self {
        Sampler {
            client,
            temperatures,
            mode,
        }
    }

    fn call(&self, request: ChatRequest) -> (TranscriptEntry, Result<String>) {
        match self.client.complete(&request) {
            Ok(c) => (
                TranscriptEntry {
                    request,
                    response: Some(c.text.clone()),
                    cached: c.cached,
                    error: None,
                },
                Ok(c.text),
            ),
            Err(e) => (
                TranscriptEntry {
                    request,
                    response: None,
                    cached: false,
                    error: Some(e.to_string()),
                },
                Err(e.into()),
            ),
        }
    }

    fn set(
        &self,
        prompt: &PromptRecord,
        model_id: &str,
        strategy: StrategySpec,
        category: Option<TaskCategory>,
        responses: Vec<String>,
        raw_transcript: Vec<TranscriptEntry>,
    ) -> ResponseSet {
        ResponseSet {
            prompt_id: prompt.id.clone(),
            model_id: model_id.to_string(),
            strategy,
            category,
            responses,
            raw_transcript,
        }
    }

    /// `k` independent single-completion requests on the bare prompt.
    pub fn temperature_sample(
        &self,
        prompt: &PromptRecord,
        model_id: &str,
        level: TemperatureLevel,
        k: usize,
    ) -> Result<ResponseSet> {
        let strategy = StrategySpec::temperature(level, k);
        strategy.validate()?;
        let temperature = self.temperatures.resolve(model_id, level)?;
        let outcomes = exec::map_range(self.mode, k, |i| {
            self.call(
                ChatRequest::user(model_id, prompt.text.as_str())
                    .with_temperature(temperature)
                    .with_replicate(i as u32),
            )
        });
        let mut transcript = Vec::with_capacity(k);
        let mut responses = Vec::with_capacity(k);
        let mut failure = None;
        for (entry, outcome) in outcomes {
            transcript.push(entry);
            match outcome {
                Ok(text) => responses.push(text),
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        }
        if let Some(source) = failure {
            return Err(Error::PartialSet {
                completed: responses,
                requested: k,
                source: Box::new(source),
            });
        }
        Ok(self.set(prompt, model_id, strategy, None, responses, transcript))
    }

    /// One generation under a multi-response system prompt, split on markers.
    /// A malformed split is regenerated once before failing.
    pub fn system_prompt_sample(
        &self,
        prompt: &PromptRecord,
        model_id: &str,
        variant: Variant,
        category: Option<TaskCategory>,
        k: usize,
    ) -> Result<ResponseSet> {
        let strategy = StrategySpec::system_prompt(variant, k);
        strategy.validate()?;
        let system = render_system_prompt(variant, category, k)?;
        let temperature = self.temperatures.resolve(model_id, TemperatureLevel::Medium)?;
        let mut transcript = Vec::new();
        let mut last_err = None;
        for attempt in 0..2u32 {
            let (entry, outcome) = self.call(
                ChatRequest::user(model_id, prompt.text.as_str())
                    .with_system(system.as_str())
                    .with_temperature(temperature)
                    .with_replicate(attempt),
            );
            transcript.push(entry);
            match outcome.and_then(|raw| split_numbered_responses(&raw, k)) {
                Ok(responses) => {
                    return Ok(self.set(prompt, model_id, strategy, category, responses, transcript))
                }
                Err(e @ Error::MalformedGeneration { .. }) => {
                    tracing::warn!(prompt = %prompt.id, model = model_id, attempt, "malformed multi-response generation: {e}");
                    last_err = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_err.expect("both attempts failed"))
    }

    /// First response by medium-temperature sampling; each further response
    /// from the growing conversation plus a regeneration request.
    pub fn regenerate_in_context(
        &self,
        prompt: &PromptRecord,
        model_id: &str,
        variant: Variant,
        category: Option<TaskCategory>,
        k: usize,
    ) -> Result<ResponseSet> {
        let strategy = StrategySpec::regeneration(variant, k);
        strategy.validate()?;
        let turn = render_regeneration_turn(variant, category, &prompt.text)?;
        let temperature = self.temperatures.resolve(model_id, TemperatureLevel::Medium)?;

        let mut messages = vec![Message::user(prompt.text.as_str())];
        let mut responses = Vec::with_capacity(k);
        let mut transcript = Vec::with_capacity(k);
        for i in 0..k {
            if i > 0 {
                messages.push(Message::user(turn.as_str()));
            }
            let (entry, outcome) =
                self.call(ChatRequest::new(model_id, messages.clone()).with_temperature(temperature));
            transcript.push(entry);
            match outcome {
                Ok(text) => {
                    messages.push(Message::assistant(text.as_str()));
                    responses.push(text);
                }
                Err(source) => {
                    return Err(Error::PartialSet {
                        completed: responses,
                        requested: k,
                        source: Box::new(source),
                    })
                }
            }
        }
        Ok(self.set(prompt, model_id, strategy, category, responses, transcript))
    }

    pub fn sample(
        &self,
        prompt: &PromptRecord,
        model_id: &str,
        strategy: &StrategySpec,
        category: Option<TaskCategory>,
    ) -> Result<ResponseSet> {
        strategy.validate()?;
        let mut set = match strategy.kind {
            StrategyKind::Temperature => {
                self.temperature_sample(prompt, model_id, strategy.temperature_level, strategy.k)
            }
            StrategyKind::SystemPrompt => {
                self.system_prompt_sample(prompt, model_id, strategy.variant, category, strategy.k)
            }
            StrategyKind::InContextRegeneration => {
                self.regenerate_in_context(prompt, model_id, strategy.variant, category, strategy.k)
            }
        }?;
        set.category = category;
        Ok(set)
    }
}
