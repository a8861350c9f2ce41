//! The eight-category task taxonomy and majority-vote prompt classification.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datasets::PromptRecord;
use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::providers::{ChatRequest, Client};
use crate::template;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskCategory {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verifiability {
    Verifiable,
    VerifiableMultiple,
    PartiallyVerifiable,
    NonVerifiable,
}

impl TaskCategory {
    pub const ALL: [TaskCategory; 8] = [
        TaskCategory::A,
        TaskCategory::B,
        TaskCategory::C,
        TaskCategory::D,
        TaskCategory::E,
        TaskCategory::F,
        TaskCategory::G,
        TaskCategory::H,
    ];

    pub fn code(self) -> char {
        match self {
            TaskCategory::A => 'A',
            TaskCategory::B => 'B',
            TaskCategory::C => 'C',
            TaskCategory::D => 'D',
            TaskCategory::E => 'E',
            TaskCategory::F => 'F',
            TaskCategory::G => 'G',
            TaskCategory::H => 'H',
        }
    }

    pub fn from_code(code: char) -> Option<TaskCategory> {
        TaskCategory::ALL
            .into_iter()
            .find(|c| c.code() == code.to_ascii_uppercase())
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskCategory::A => "Well-Specified Singular Objective",
            TaskCategory::B => "Underspecified Singular Objective",
            TaskCategory::C => "Random Generation",
            TaskCategory::D => "Problem-Solving Objective",
            TaskCategory::E => "Problem Solving or Design Subjective",
            TaskCategory::F => "Encyclopedia Inquiry",
            TaskCategory::G => "Creative Writing",
            TaskCategory::H => "Advice or Opinions",
        }
    }

    pub fn verifiability(self) -> Verifiability {
        match self {
            TaskCategory::A | TaskCategory::D => Verifiability::Verifiable,
            TaskCategory::B | TaskCategory::C => Verifiability::VerifiableMultiple,
            TaskCategory::E | TaskCategory::F => Verifiability::PartiallyVerifiable,
            TaskCategory::G | TaskCategory::H => Verifiability::NonVerifiable,
        }
    }

    /// What is allowed to vary between functionally different responses.
    pub fn functional_diversity_desc(self) -> &'static str {
        match self {
            TaskCategory::A => "None",
            TaskCategory::B => "Different correct answers",
            TaskCategory::C => "Different pseudo-random options",
            TaskCategory::D => "Different solution strategies",
            TaskCategory::E => "Different solutions",
            TaskCategory::F => "Different factual perspectives",
            TaskCategory::G => "Different creative elements",
            TaskCategory::H => "Different views or perspectives",
        }
    }

    /// True for categories A-D, whose answers can be checked against ground truth.
    pub fn is_verifiable(self) -> bool {
        matches!(
            self.verifiability(),
            Verifiability::Verifiable | Verifiability::VerifiableMultiple
        )
    }
}

impl fmt::Display for TaskCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl FromStr for TaskCategory {
    type Err = Error;

    /// Accepts a canonical code (`"D"`) or a canonical name, case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let mut chars = t.chars();
        if let (Some(c), None) = (chars.next(), chars.next()) {
            if let Some(cat) = TaskCategory::from_code(c) {
                return Ok(cat);
            }
        }
        TaskCategory::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(t))
            .ok_or_else(|| Error::Config(format!("unknown task category {s:?}")))
    }
}

/// A letter in the classifier prompt's seven-way answer space. The classifier
/// prompt omits the subjective problem-solving category, so its letters E, F
/// and G name canonical categories F, G and H.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClassifierLetter(char);

impl ClassifierLetter {
    pub const ALL: [char; 7] = ['A', 'B', 'C', 'D', 'E', 'F', 'G'];

    pub fn new(letter: char) -> Option<ClassifierLetter> {
        let up = letter.to_ascii_uppercase();
        Self::ALL.contains(&up).then_some(ClassifierLetter(up))
    }

    pub fn letter(self) -> char {
        self.0
    }

    pub fn category(self) -> TaskCategory {
        match self.0 {
            'A' => TaskCategory::A,
            'B' => TaskCategory::B,
            'C' => TaskCategory::C,
            'D' => TaskCategory::D,
            'E' => TaskCategory::F,
            'F' => TaskCategory::G,
            _ => TaskCategory::H,
        }
    }
}

pub fn render_classifier_prompt(prompt_text: &str) -> Result<String> {
    if prompt_text.trim().is_empty() {
        return Err(Error::precondition("prompt text is empty"));
    }
    template::render(
        template::required_asset("classifier/classifier.txt")?,
        &[("prompt", prompt_text)],
    )
}

/// Extracts the first standalone classifier letter from a judge completion.
///
/// An uppercase standalone letter wins over lowercase ones, so prose such as
/// "it is a D" resolves to D rather than to the article.
pub fn parse_category_letter(raw: &str) -> Result<TaskCategory> {
    let standalone: Vec<char> = standalone_chars(raw).collect();
    let pick = standalone
        .iter()
        .copied()
        .find(|c| c.is_ascii_uppercase() && ClassifierLetter::new(*c).is_some())
        .or_else(|| {
            standalone
                .iter()
                .copied()
                .find(|c| ClassifierLetter::new(*c).is_some())
        });
    pick.and_then(ClassifierLetter::new)
        .map(ClassifierLetter::category)
        .ok_or_else(|| Error::UnparseableVerdict(raw.to_string()))
}

/// Characters not adjacent to any other alphanumeric character.
fn standalone_chars(raw: &str) -> impl Iterator<Item = char> + '_ {
    let chars: Vec<char> = raw.chars().collect();
    (0..chars.len()).filter_map(move |i| {
        let c = chars[i];
        let before = i.checked_sub(1).map(|j| chars[j]);
        let after = chars.get(i + 1).copied();
        let isolated = c.is_alphabetic()
            && !before.is_some_and(char::is_alphanumeric)
            && !after.is_some_and(char::is_alphanumeric);
        isolated.then_some(c)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteKind {
    Unanimous,
    Majority,
    Tiebreak,
    /// Category supplied with the input data; no judges consulted.
    Preassigned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub prompt_id: String,
    /// `None` marks an abstention (unparseable after retry).
    pub per_judge: BTreeMap<String, Option<TaskCategory>>,
    pub final_category: TaskCategory,
    pub vote_kind: VoteKind,
}

/// Majority vote over cast votes, in judge order.
///
/// A strict mode wins; otherwise the first judge that cast a vote breaks the
/// tie. Abstentions (`None`) are ignored. Returns `None` when nobody voted.
pub fn majority_vote(votes: &[Option<TaskCategory>]) -> Option<(TaskCategory, VoteKind)> {
    let cast: Vec<TaskCategory> = votes.iter().flatten().copied().collect();
    let first = *cast.first()?;
    let mut counts: BTreeMap<TaskCategory, usize> = BTreeMap::new();
    for v in &cast {
        *counts.entry(*v).or_default() += 1;
    }
    let top = *counts.values().max()?;
    let leaders: Vec<TaskCategory> = counts
        .iter()
        .filter(|(_, n)| **n == top)
        .map(|(c, _)| *c)
        .collect();
    if counts.len() == 1 {
        Some((first, VoteKind::Unanimous))
    } else if leaders.len() == 1 {
        Some((leaders[0], VoteKind::Majority))
    } else {
        Some((first, VoteKind::Tiebreak))
    }
}

fn judge_vote(client: &Client, judge: &str, rendered: &str) -> Result<TaskCategory> {
    let mut last = None;
    for attempt in 0..2u32 {
        let req = ChatRequest::user(judge, rendered)
            .with_temperature(0.0)
            .with_replicate(attempt);
        let completion = client.complete(&req)?;
        match parse_category_letter(&completion.text) {
            Ok(cat) => return Ok(cat),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("two attempts were made"))
}

/// Classifies one prompt with an odd-sized judge ensemble at temperature 0.
///
/// Prompts that already carry a category skip the judges entirely.
pub fn classify(
    client: &Client,
    prompt: &PromptRecord,
    judges: &[String],
    mode: ExecMode,
) -> Result<ClassificationResult> {
    if let Some(category) = prompt.category {
        return Ok(ClassificationResult {
            prompt_id: prompt.id.clone(),
            per_judge: BTreeMap::new(),
            final_category: category,
            vote_kind: VoteKind::Preassigned,
        });
    }
    if judges.is_empty() || judges.len().is_multiple_of(2) {
        return Err(Error::precondition(format!(
            "classification needs an odd number of judges, got {}",
            judges.len()
        )));
    }
    let rendered = render_classifier_prompt(&prompt.text)?;
    let outcomes = exec::map(mode, judges, |judge| judge_vote(client, judge, &rendered));

    let mut per_judge = BTreeMap::new();
    let mut votes = Vec::with_capacity(judges.len());
    let mut reasons = Vec::new();
    for (judge, outcome) in judges.iter().zip(outcomes) {
        match outcome {
            Ok(cat) => {
                votes.push(Some(cat));
                per_judge.insert(judge.clone(), Some(cat));
            }
            Err(e @ Error::UnparseableVerdict(_)) => {
                tracing::warn!(prompt = %prompt.id, %judge, "classifier abstained: {e}");
                reasons.push(format!("{judge}: {e}"));
                votes.push(None);
                per_judge.insert(judge.clone(), None);
            }
            Err(e) => return Err(e),
        }
    }
    let (final_category, vote_kind) =
        majority_vote(&votes).ok_or_else(|| Error::ClassificationFailed {
            prompt_id: prompt.id.clone(),
            reason: reasons.join("; "),
        })?;
    Ok(ClassificationResult {
        prompt_id: prompt.id.clone(),
        per_judge,
        final_category,
        vote_kind,
    })
}
