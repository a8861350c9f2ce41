//! Checklist-based quality grading, accuracy checks and an optional external
//! reward scorer.

use std::sync::OnceLock;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::diversity::ask_yes_no;
use crate::error::{Error, Result};
use crate::providers::{ChatRequest, Client, ProviderError};
use crate::template;

pub const CHECKLIST_MARKER: &str = "Here is my quality checklist:";
pub const MIN_QUESTIONS: usize = 3;
pub const MAX_QUESTIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checklist {
    pub prompt_id: String,
    pub judge_model: String,
    pub questions: Vec<String>,
    pub preamble: String,
}

impl Checklist {
    /// Numbered list as shown to the grader.
    pub fn render(&self) -> String {
        self.questions
            .iter()
            .enumerate()
            .map(|(i, q)| format!("{}. {q}", i + 1))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn numbered_item() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:[-*]\s*)?\**(\d{1,2})\**[.)]\**\s*(.*?)\s*$").expect("valid regex"))
}

/// Parses the questions listed after the checklist marker. Returns
/// `(preamble, questions)`.
pub fn parse_checklist(raw: &str) -> Result<(String, Vec<String>)> {
    let at = raw
        .find(CHECKLIST_MARKER)
        .ok_or_else(|| Error::ChecklistFailed("checklist marker missing".into()))?;
    let preamble = raw[..at].trim().to_string();
    let mut questions = Vec::new();
    for line in raw[at + CHECKLIST_MARKER.len()..].lines() {
        if line.trim().is_empty() {
            continue;
        }
        match numbered_item().captures(line) {
            Some(c) if !c[2].is_empty() => questions.push(c[2].to_string()),
            _ => match questions.last_mut() {
                // A wrapped question continues on the next line.
                Some(q) => {
                    q.push(' ');
                    q.push_str(line.trim());
                }
                None => continue,
            },
        }
    }
    if !(MIN_QUESTIONS..=MAX_QUESTIONS).contains(&questions.len()) {
        return Err(Error::ChecklistFailed(format!(
            "expected {MIN_QUESTIONS} to {MAX_QUESTIONS} questions, found {}",
            questions.len()
        )));
    }
    Ok((preamble, questions))
}

fn ask(client: &Client, judge_model: &str, body: &str, attempt: u32) -> Result<String> {
    let request = ChatRequest::user(judge_model, body)
        .with_temperature(0.0)
        .with_replicate(attempt);
    Ok(client.complete(&request)?.text)
}

pub fn generate_checklist(client: &Client, prompt_id: &str, prompt: &str, judge_model: &str) -> Result<Checklist> {
    let body = template::render(
        template::required_asset("quality/checklist_creation.txt")?,
        &[("prompt", prompt)],
    )?;
    let mut last = None;
    for attempt in 0..2 {
        let raw = ask(client, judge_model, &body, attempt)?;
        match parse_checklist(&raw) {
            Ok((preamble, questions)) => {
                return Ok(Checklist {
                    prompt_id: prompt_id.to_string(),
                    judge_model: judge_model.to_string(),
                    questions,
                    preamble,
                })
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("two attempts"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionAnswer {
    /// `None` if the grader skipped or garbled this item.
    pub answer: Option<bool>,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityGrade {
    pub prompt_id: String,
    pub response_index: usize,
    pub judge_model: String,
    pub per_question: Vec<QuestionAnswer>,
    pub score: u8,
}

fn score_sentence() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)my quality score for the response is[\s*_`:]*(-?\d+(?:\.\d+)?)").expect("valid regex")
    })
}

/// Score from the closing sentence; the last occurrence wins.
pub fn parse_grade_score(raw: &str) -> Result<u8> {
    let caps = score_sentence()
        .captures_iter(raw)
        .last()
        .ok_or_else(|| Error::GradeFailed("score sentence missing".into()))?;
    let text = &caps[1];
    match text.parse::<u8>() {
        Ok(s @ 1..=5) => Ok(s),
        _ => Err(Error::GradeFailed(format!("score {text} outside 1-5"))),
    }
}

/// Answers to each numbered checklist item, padded to `n` items.
pub fn parse_checklist_answers(raw: &str, n: usize) -> Vec<QuestionAnswer> {
    let mut out = vec![
        QuestionAnswer {
            answer: None,
            justification: String::new(),
        };
        n
    ];
    for line in raw.lines() {
        let Some(c) = numbered_item().captures(line) else { continue };
        let Ok(idx) = c[1].parse::<usize>() else { continue };
        if idx == 0 || idx > n || out[idx - 1].answer.is_some() {
            continue;
        }
        let rest = c[2].trim_start_matches(['*', '_']);
        let first: String = rest.chars().take_while(|ch| ch.is_alphabetic()).collect();
        let answer = match first.to_ascii_lowercase().as_str() {
            "yes" => Some(true),
            "no" => Some(false),
            _ => None,
        };
        let justification = rest[first.len()..]
            .trim_start_matches(|ch: char| !ch.is_alphanumeric())
            .trim()
            .to_string();
        out[idx - 1] = QuestionAnswer { answer, justification };
    }
    out
}

pub fn render_grading_prompt(prompt: &str, response: &str, checklist: &Checklist) -> Result<String> {
    template::render(
        template::required_asset("quality/checklist_grading.txt")?,
        &[
            ("prompt", prompt),
            ("response", response),
            ("checklist", &checklist.render()),
        ],
    )
}

pub fn grade_with_checklist(
    client: &Client,
    prompt: &str,
    response: &str,
    response_index: usize,
    checklist: &Checklist,
    judge_model: &str,
) -> Result<QualityGrade> {
    if checklist.judge_model != judge_model {
        return Err(Error::precondition(format!(
            "checklist by {} used for judge {judge_model}",
            checklist.judge_model
        )));
    }
    let body = render_grading_prompt(prompt, response, checklist)?;
    let mut last = None;
    for attempt in 0..2 {
        let raw = ask(client, judge_model, &body, attempt)?;
        match parse_grade_score(&raw) {
            Ok(score) => {
                return Ok(QualityGrade {
                    prompt_id: checklist.prompt_id.clone(),
                    response_index,
                    judge_model: judge_model.to_string(),
                    per_question: parse_checklist_answers(&raw, checklist.questions.len()),
                    score,
                })
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("two attempts"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyVerdict {
    pub prompt_id: String,
    pub response_index: usize,
    /// `None` when the verdict stayed unparseable; excluded from rates.
    pub correct: Option<bool>,
    pub judge_model: String,
}

pub fn grade_accuracy(
    client: &Client,
    prompt_id: &str,
    prompt: &str,
    gold_answer: &str,
    response: &str,
    response_index: usize,
    judge_model: &str,
) -> Result<AccuracyVerdict> {
    if gold_answer.trim().is_empty() {
        return Err(Error::precondition("accuracy grading needs a gold answer"));
    }
    let body = template::render(
        template::required_asset("quality/accuracy.txt")?,
        &[("prompt", prompt), ("gold_answer", gold_answer), ("response", response)],
    )?;
    let (correct, raw) = ask_yes_no(client, judge_model, &body)?;
    if correct.is_none() {
        tracing::warn!(prompt = prompt_id, judge = judge_model, raw = %raw, "unparseable accuracy verdict");
    }
    Ok(AccuracyVerdict {
        prompt_id: prompt_id.to_string(),
        response_index,
        correct,
        judge_model: judge_model.to_string(),
    })
}

/// Fraction of parseable verdicts that are correct; `None` if there are none.
pub fn accuracy_rate(verdicts: &[AccuracyVerdict]) -> Option<f64> {
    let graded: Vec<bool> = verdicts.iter().filter_map(|v| v.correct).collect();
    if graded.is_empty() {
        return None;
    }
    Some(graded.iter().filter(|c| **c).count() as f64 / graded.len() as f64)
}

#[derive(Serialize)]
struct RewardRequest<'a> {
    prompt: &'a str,
    response: &'a str,
}

#[derive(Deserialize)]
struct RewardResponse {
    score: serde_json::Value,
}

/// POSTs `{prompt, response}` to a scalar reward endpoint and returns its
/// `score` unchanged.
pub fn score_external_reward(prompt: &str, response: &str, endpoint: Option<&str>) -> Result<f64> {
    let url = endpoint
        .filter(|u| !u.trim().is_empty())
        .ok_or_else(|| Error::FeatureDisabled("no reward endpoint configured".into()))?;
    let transport = |e: reqwest::Error| ProviderError::Transport {
        provider: "reward".into(),
        message: e.to_string(),
    };
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(60))
        .build()
        .map_err(transport)?;
    let resp = client
        .post(url)
        .json(&RewardRequest { prompt, response })
        .send()
        .map_err(transport)?;
    let status = resp.status();
    let body = resp.text().map_err(transport)?;
    if !status.is_success() {
        return Err(ProviderError::Http {
            provider: "reward".into(),
            status: status.as_u16(),
            message: body,
        }
        .into());
    }
    let parsed: RewardResponse = serde_json::from_str(&body)
        .map_err(|e| ProviderError::Malformed(format!("reward response: {e}")))?;
    match parsed.score.as_f64() {
        Some(s) if s.is_finite() => Ok(s),
        _ => Err(ProviderError::Malformed(format!("reward score is not a finite number: {}", parsed.score)).into()),
    }
}
