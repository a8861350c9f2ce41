//! A deterministic stand-in for a chat model that understands the harness's
//! own prompt templates. Used by `--mock` runs and end-to-end tests.
//!
//! Generations are built from a small pool of "cores" per prompt; two
//! responses are functionally equivalent exactly when their first sentences
//! match, which is also the rule the simulated judge applies. Task-anchored
//! instructions widen the pool (or collapse it to one core for single-answer
//! prompts), so a mock run shows the same qualitative ordering as live models.

use std::sync::atomic::{AtomicUsize, Ordering};

use sha2::{Digest, Sha256};

use super::{ChatBackend, ChatRequest, Completion, ProviderError, Role, Usage};

const CORES: [&str; 10] = [
    "amber", "birch", "cobalt", "delta", "ember", "fjord", "garnet", "harbor", "indigo", "juniper",
];
const FILLER: [&str; 16] = [
    "carefully", "notably", "in practice", "on balance", "for example", "in short", "broadly",
    "in context", "by contrast", "at heart", "quietly", "plainly", "in effect", "overall",
    "at first glance", "simply",
];

fn h(parts: &[&str]) -> u64 {
    let mut d = Sha256::new();
    for p in parts {
        d.update(p.as_bytes());
        d.update([0x1f]);
    }
    let out = d.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("32-byte digest"))
}

#[derive(Default)]
pub struct SimulatedLlm {
    calls: AtomicUsize,
}

impl SimulatedLlm {
    pub fn new() -> Self {
        SimulatedLlm::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let to = text[from..].find(end).map_or(text.len(), |i| from + i);
    Some(&text[from..to])
}

/// Keyword guess at a classifier letter (A-G in the classifier's lettering).
fn guess_letter(prompt: &str) -> char {
    let p = prompt.to_lowercase();
    let has = |words: &[&str]| words.iter().any(|w| p.contains(w));
    if has(&["roll", "flip", "random", "pick a number", "shuffle"]) {
        'C'
    } else if has(&["how many", "solve", "compute", "calculate", "value of", "divisor", "prove"]) {
        'D'
    } else if has(&["name one", "name a ", "give me an example", "give an example", "list one"]) {
        'B'
    } else if has(&["poem", "story", "riddle", "joke", "haiku", "write a", "limerick"]) {
        'F'
    } else if has(&["advice", "should i", "recommend", "gift", "opinion", "what do you think", "tips"]) {
        'G'
    } else if has(&["why is", "why did", "tradition", "history", "famous", "describe", "culture"]) {
        'E'
    } else {
        'A'
    }
}

fn sentence(core: &str, seed: u64) -> String {
    let a = FILLER[(seed % FILLER.len() as u64) as usize];
    let b = FILLER[((seed >> 8) % FILLER.len() as u64) as usize];
    format!("The {core} answer. Stated {a}, and {b}, this is the response.")
}

fn first_sentence(text: &str) -> String {
    text.trim()
        .split('.')
        .next()
        .unwrap_or("")
        .trim()
        .to_lowercase()
}

impl SimulatedLlm {
    fn classify(&self, req: &ChatRequest, body: &str) -> String {
        let prompt = between(body, "Prompt: ", "\n\nTask Categories:").unwrap_or("");
        let guess = guess_letter(prompt);
        // One judge in five disagrees, to exercise the vote.
        if h(&[&req.model_id, prompt, "dissent"]).is_multiple_of(5) {
            let alt = ['A', 'B', 'C', 'D', 'E', 'F', 'G'][(h(&[prompt, &req.model_id]) % 7) as usize];
            return alt.to_string();
        }
        guess.to_string()
    }

    fn judge_pair(&self, body: &str) -> String {
        let a = between(body, "\nResponse 1: ", "\nResponse 2: ").unwrap_or("");
        let b = between(body, "\nResponse 2: ", "\n###").unwrap_or("");
        if first_sentence(a) == first_sentence(b) {
            "YES".into()
        } else {
            "NO".into()
        }
    }

    fn checklist(&self, req: &ChatRequest, body: &str) -> String {
        let prompt = between(body, "# User Prompt\n", "\n\n# Output Format").unwrap_or("");
        let n = 3 + (h(&[&req.model_id, prompt, "checklist"]) % 3) as usize;
        let questions: Vec<String> = (1..=n)
            .map(|i| format!("{i}. Does the response address requirement {i} of the prompt?"))
            .collect();
        format!(
            "The key factors are relevance, correctness and clarity.\n\nHere is my quality checklist:\n{}",
            questions.join("\n")
        )
    }

    fn grade(&self, req: &ChatRequest, body: &str) -> String {
        let checklist = between(body, "# Quality Checklist\n", "\n\n# Instructions").unwrap_or("");
        let n = checklist
            .lines()
            .filter(|l| l.trim_start().chars().next().is_some_and(|c| c.is_ascii_digit()))
            .count();
        let response = between(body, "# Response To Grade\n", "\n\n# Quality Checklist").unwrap_or("");
        let score = 3 + h(&[&req.model_id, response, "grade"]) % 3;
        let answers: Vec<String> = (1..=n)
            .map(|i| {
                let yes = (i as u64) <= score;
                format!(
                    "{i}. {} - The response {} this criterion.",
                    if yes { "yes" } else { "no" },
                    if yes { "meets" } else { "misses" }
                )
            })
            .collect();
        format!(
            "{}\n\nBased on the quality checklist, my quality score for the response is {score}.",
            answers.join("\n")
        )
    }

    fn accuracy(&self, body: &str) -> String {
        let gold = between(body, "# Reference Answer\n", "\n\n# Response").unwrap_or("");
        let response = between(body, "# Response\n", "\n\n# Instructions").unwrap_or("");
        if !gold.trim().is_empty() && response.to_lowercase().contains(&gold.trim().to_lowercase()) {
            "YES".into()
        } else {
            "NO".into()
        }
    }

    fn generate(&self, req: &ChatRequest) -> String {
        let prompt = req.messages.first().map(|m| m.text.as_str()).unwrap_or("");
        let temp = format!("{}", req.temperature);
        let system = req.system_text.as_deref().unwrap_or("");

        if let Some(k) = between(system, "Make sure to stop at # Response ", ".")
            .and_then(|s| s.trim().parse::<usize>().ok())
        {
            let anchored = !system.starts_with("Generate ");
            let single = system.starts_with("The following prompt has a single correct answer.");
            let pool = if single { 1 } else if anchored { CORES.len() } else { 3 };
            let offset = h(&[&req.model_id, prompt, system, &req.replicate.to_string()]);
            return (1..=k)
                .map(|i| {
                    let core = if pool == 1 {
                        (offset % 2) as usize
                    } else if anchored {
                        (offset as usize + i) % pool
                    } else {
                        (h(&[&offset.to_string(), &i.to_string()]) % pool as u64) as usize
                    };
                    format!("# Response {i}:\n{}", sentence(CORES[core], offset ^ i as u64))
                })
                .collect::<Vec<_>>()
                .join("\n\n");
        }

        if req.messages.len() > 1 {
            let last = req.messages.last().map(|m| m.text.as_str()).unwrap_or("");
            let turn = req.messages.iter().filter(|m| m.role == Role::Assistant).count();
            let keep_same = last.contains("so your answer should remain the same");
            let anchored = last.contains("Remember, the prompt is:");
            let seed = h(&[&req.model_id, prompt, &temp, "regen"]);
            let core = if keep_same {
                (seed % 2) as usize
            } else if anchored {
                (seed as usize + turn) % CORES.len()
            } else {
                (h(&[&seed.to_string(), &turn.to_string()]) % 3) as usize
            };
            return sentence(CORES[core], seed ^ turn as u64);
        }

        let greedy = req.temperature == 0.0;
        let replicate = if greedy { 0 } else { req.replicate };
        let seed = h(&[&req.model_id, prompt, &temp, &replicate.to_string()]);
        let pool = if greedy {
            1
        } else if req.temperature > 1.0 {
            3
        } else {
            2
        };
        let base = (h(&[&req.model_id, prompt]) % 2) as usize;
        let core = base + (seed % pool as u64) as usize;
        sentence(CORES[core], seed)
    }
}

impl ChatBackend for SimulatedLlm {
    fn chat(&self, request: &ChatRequest) -> Result<Completion, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let body = request.messages.last().map(|m| m.text.as_str()).unwrap_or("");
        let text = if body.starts_with("Read the prompt below and decide which task category") {
            self.classify(request, body)
        } else if body.starts_with("For the given prompt and two responses") {
            self.judge_pair(body)
        } else if body.contains("Your task is to generate a quality checklist") {
            self.checklist(request, body)
        } else if body.contains("Your task is to grade the given LLM response") {
            self.grade(request, body)
        } else if body.starts_with("You are checking whether a response") {
            self.accuracy(body)
        } else {
            self.generate(request)
        };
        Ok(Completion {
            usage: Usage {
                input_tokens: body.split_whitespace().count() as u64,
                output_tokens: text.split_whitespace().count() as u64,
            },
            text,
            model_id: request.model_id.clone(),
            cached: false,
        })
    }
}
