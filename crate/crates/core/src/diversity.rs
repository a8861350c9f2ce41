//! Vocabulary, embedding and functional diversity over a response set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, ExecMode};
use crate::providers::{ChatRequest, Client, EmbeddingVector};
use crate::taxonomy::TaskCategory;
use crate::template;

/// Lowercased, deduplicated word tokens. Words are maximal runs of
/// alphanumeric characters (Unicode-aware).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordSet {
    pub words: BTreeSet<String>,
}

impl WordSet {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn tokenize_words(text: &str) -> WordSet {
    let words = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    WordSet { words }
}

/// One minus the Jaccard similarity of the two word sets; 0 when both are empty.
pub fn vocabulary_diversity(y_a: &str, y_b: &str) -> f64 {
    let a = tokenize_words(y_a);
    let b = tokenize_words(y_b);
    let union = a.words.union(&b.words).count();
    if union == 0 {
        return 0.0;
    }
    let shared = a.words.intersection(&b.words).count();
    1.0 - shared as f64 / union as f64
}

/// One minus cosine similarity.
pub fn embedding_diversity(v_a: &EmbeddingVector, v_b: &EmbeddingVector) -> Result<f64> {
    if v_a.dimension() != v_b.dimension() {
        return Err(Error::precondition(format!(
            "embedding dimensions differ: {} vs {}",
            v_a.dimension(),
            v_b.dimension()
        )));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (a, b) in v_a.values.iter().zip(&v_b.values) {
        dot += a * b;
        na += a * a;
        nb += b * b;
    }
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(Error::UndefinedCosine("zero-norm or non-finite vector".into()));
    }
    let cos = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
    Ok(1.0 - cos)
}

/// Mean of a pairwise metric over all unordered pairs.
pub fn mean_pairwise<T, F>(items: &[T], mut metric: F) -> Result<f64>
where
    F: FnMut(&T, &T) -> Result<f64>,
{
    if items.len() < 2 {
        return Err(Error::precondition("need at least two responses"));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            total += metric(&items[i], &items[j])?;
            n += 1;
        }
    }
    Ok(total / n as f64)
}

pub fn mean_vocabulary_diversity<S: AsRef<str>>(responses: &[S]) -> Result<f64> {
    mean_pairwise(responses, |a, b| Ok(vocabulary_diversity(a.as_ref(), b.as_ref())))
}

pub fn mean_embedding_diversity(vectors: &[EmbeddingVector]) -> Result<f64> {
    mean_pairwise(vectors, embedding_diversity)
}

pub fn render_equivalence_prompt(prompt: &str, category: TaskCategory, y_a: &str, y_b: &str) -> Result<String> {
    let code = category.code();
    template::render(
        template::required_asset("judge/functional_equivalence.txt")?,
        &[
            (
                "Task-Anchored Functional Diversity Definition",
                template::required_asset(&format!("judge/definition/{code}.txt"))?,
            ),
            ("prompt", prompt),
            ("response 1", y_a),
            ("response 2", y_b),
            (
                "Task-Anchored Diversity Judge Options",
                template::required_asset(&format!("judge/options/{code}.txt"))?,
            ),
        ],
    )
}

/// `true` for YES, `false` for NO, whichever standalone word comes first.
pub fn parse_yes_no(raw: &str) -> Result<bool> {
    for word in raw.split(|c: char| !c.is_alphanumeric()) {
        if word.eq_ignore_ascii_case("yes") {
            return Ok(true);
        }
        if word.eq_ignore_ascii_case("no") {
            return Ok(false);
        }
    }
    Err(Error::UnparseableVerdict(raw.to_string()))
}

/// Asks `judge_model` a yes/no question at temperature 0, retrying once on an
/// unparseable verdict. Returns the parsed answer (None if still unparseable)
/// and the last raw verdict.
pub(crate) fn ask_yes_no(client: &Client, judge_model: &str, body: &str) -> Result<(Option<bool>, String)> {
    let mut raw = String::new();
    for attempt in 0..2u32 {
        let request = ChatRequest::user(judge_model, body)
            .with_temperature(0.0)
            .with_replicate(attempt);
        raw = client.complete(&request)?.text;
        if let Ok(v) = parse_yes_no(&raw) {
            return Ok((Some(v), raw));
        }
    }
    Ok((None, raw))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairJudgment {
    /// Zero-based indices, `pair.0 < pair.1`.
    pub pair: (usize, usize),
    pub judge_model: String,
    /// `None` when the verdict could not be parsed after a retry.
    pub equivalent: Option<bool>,
    pub raw_verdict: String,
}

pub fn judge_pair_equivalent(
    client: &Client,
    prompt: &str,
    category: TaskCategory,
    responses: (&str, &str),
    pair: (usize, usize),
    judge_model: &str,
) -> Result<PairJudgment> {
    if pair.0 >= pair.1 {
        return Err(Error::precondition(format!("pair {pair:?} is not in canonical order")));
    }
    let body = render_equivalence_prompt(prompt, category, responses.0, responses.1)?;
    let (equivalent, raw_verdict) = ask_yes_no(client, judge_model, &body)?;
    if equivalent.is_none() {
        tracing::warn!(judge = judge_model, ?pair, "unparseable equivalence verdict, treating as not equivalent");
    }
    Ok(PairJudgment {
        pair,
        judge_model: judge_model.to_string(),
        equivalent,
        raw_verdict,
    })
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Number of connected components on `k` vertices (zero-based) with the given
/// equivalence edges.
pub fn count_functional_groups(k: usize, equivalences: &[(usize, usize)]) -> Result<usize> {
    if k == 0 {
        return Err(Error::precondition("k must be positive"));
    }
    let mut uf = UnionFind::new(k);
    let mut groups = k;
    for &(i, j) in equivalences {
        if i >= k || j >= k || i == j {
            return Err(Error::precondition(format!("edge ({i}, {j}) out of range for k={k}")));
        }
        if uf.union(i, j) {
            groups -= 1;
        }
    }
    Ok(groups)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalAggregation {
    /// Each judge's verdicts give one component count; report their mean.
    #[default]
    PerJudgeMean,
    /// An edge exists when a strict majority of judges with a verdict on the
    /// pair say YES; report the single resulting count.
    MajorityEdges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDiversityScore {
    pub per_judge_counts: BTreeMap<String, usize>,
    pub mean_count: f64,
    #[serde(default)]
    pub excluded_judges: Vec<String>,
    pub judgments: Vec<PairJudgment>,
}

pub fn canonical_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect()
}

/// Judges every unordered pair with every judge, then aggregates counts.
pub fn functional_diversity_score<S: AsRef<str> + Sync>(
    client: &Client,
    prompt: &str,
    category: TaskCategory,
    responses: &[S],
    judges: &[String],
    aggregation: FunctionalAggregation,
    mode: ExecMode,
) -> Result<FunctionalDiversityScore> {
    let k = responses.len();
    if k < 2 {
        return Err(Error::precondition("functional diversity needs k >= 2"));
    }
    if judges.is_empty() {
        return Err(Error::precondition("no judges configured"));
    }
    let pairs = canonical_pairs(k);
    let jobs: Vec<(&String, (usize, usize))> = judges
        .iter()
        .flat_map(|j| pairs.iter().map(move |p| (j, *p)))
        .collect();
    let judgments = exec::map(mode, &jobs, |(judge, (i, j))| {
        judge_pair_equivalent(
            client,
            prompt,
            category,
            (responses[*i].as_ref(), responses[*j].as_ref()),
            (*i, *j),
            judge,
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    aggregate_judgments(k, judges, judgments, aggregation)
}

/// Aggregates already-collected pair judgments into a score.
pub fn aggregate_judgments(
    k: usize,
    judges: &[String],
    judgments: Vec<PairJudgment>,
    aggregation: FunctionalAggregation,
) -> Result<FunctionalDiversityScore> {
    let pairs = canonical_pairs(k).len();
    let mut per_judge_counts = BTreeMap::new();
    let mut excluded_judges = Vec::new();
    for judge in judges {
        let mine: Vec<&PairJudgment> = judgments.iter().filter(|j| &j.judge_model == judge).collect();
        let nulls = mine.iter().filter(|j| j.equivalent.is_none()).count();
        if nulls * 2 > pairs {
            tracing::warn!(judge = %judge, nulls, pairs, "judge excluded: more than half of verdicts unparseable");
            excluded_judges.push(judge.clone());
            continue;
        }
        let edges: Vec<(usize, usize)> = mine
            .iter()
            .filter(|j| j.equivalent == Some(true))
            .map(|j| j.pair)
            .collect();
        per_judge_counts.insert(judge.clone(), count_functional_groups(k, &edges)?);
    }
    if per_judge_counts.is_empty() {
        return Err(Error::UnparseableVerdict(
            "every judge exceeded the unparseable-verdict threshold".into(),
        ));
    }
    let mean_count = match aggregation {
        FunctionalAggregation::PerJudgeMean => {
            per_judge_counts.values().sum::<usize>() as f64 / per_judge_counts.len() as f64
        }
        FunctionalAggregation::MajorityEdges => {
            let mut votes: BTreeMap<(usize, usize), (usize, usize)> = BTreeMap::new();
            for j in judgments.iter().filter(|j| per_judge_counts.contains_key(&j.judge_model)) {
                if let Some(eq) = j.equivalent {
                    let v = votes.entry(j.pair).or_default();
                    v.1 += 1;
                    if eq {
                        v.0 += 1;
                    }
                }
            }
            let edges: Vec<(usize, usize)> = votes
                .into_iter()
                .filter(|(_, (yes, total))| yes * 2 > *total)
                .map(|(p, _)| p)
                .collect();
            count_functional_groups(k, &edges)? as f64
        }
    };
    Ok(FunctionalDiversityScore {
        per_judge_counts,
        mean_count,
        excluded_judges,
        judgments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer() {
        let set = |ws: &[&str]| ws.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
        assert_eq!(tokenize_words("The cat, the CAT!").words, set(&["the", "cat"]));
        assert!(tokenize_words("").is_empty());
        assert_eq!(tokenize_words("x2 y-z").words, set(&["x2", "y", "z"]));
        assert_eq!(tokenize_words("Ünïcode ÜNÏCODE café").words, set(&["ünïcode", "café"]));
    }

    #[test]
    fn vocabulary_cases() {
        assert_eq!(vocabulary_diversity("the cat sat", "the dog sat"), 0.5);
        assert_eq!(vocabulary_diversity("same words", "Same, words!"), 0.0);
        assert_eq!(vocabulary_diversity("a b", "c d"), 1.0);
        assert_eq!(vocabulary_diversity("", "  "), 0.0);
        assert_eq!(vocabulary_diversity("", "x"), 1.0);
    }

    #[test]
    fn embedding_cases() {
        let v = |xs: &[f64]| EmbeddingVector::new(xs.to_vec());
        assert!(embedding_diversity(&v(&[1.0, 2.0]), &v(&[1.0, 2.0])).unwrap().abs() < 1e-15);
        assert!((embedding_diversity(&v(&[1.0, 0.0]), &v(&[0.0, 3.0])).unwrap() - 1.0).abs() < 1e-15);
        let d = embedding_diversity(&v(&[1.0, 0.0]), &v(&[1.0, 1.0])).unwrap();
        assert!((d - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-9);
        assert!(matches!(
            embedding_diversity(&v(&[0.0, 0.0]), &v(&[1.0, 1.0])),
            Err(Error::UndefinedCosine(_))
        ));
        assert!(embedding_diversity(&v(&[1.0]), &v(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn groups() {
        assert_eq!(count_functional_groups(5, &[]).unwrap(), 5);
        assert_eq!(count_functional_groups(5, &canonical_pairs(5)).unwrap(), 1);
        assert_eq!(count_functional_groups(5, &[(0, 1), (1, 2)]).unwrap(), 3);
        assert!(count_functional_groups(5, &[(0, 5)]).is_err());
        assert!(count_functional_groups(5, &[(2, 2)]).is_err());
    }

    #[test]
    fn yes_no() {
        assert!(parse_yes_no("YES").unwrap());
        assert!(!parse_yes_no("NO").unwrap());
        assert!(parse_yes_no("Yes, same answer.").unwrap());
        assert!(parse_yes_no("**Yes**").unwrap());
        assert!(!parse_yes_no("No. Yes would be wrong.").unwrap());
        assert!(!parse_yes_no("Answer: no").unwrap());
        assert!(parse_yes_no("Nope, yesterday").is_err());
        assert!(parse_yes_no("").is_err());
    }

    #[test]
    fn equivalence_prompt() {
        let d = render_equivalence_prompt("p", TaskCategory::D, "a", "b").unwrap();
        assert!(d.contains("same problem-solving strategy"));
        let g = render_equivalence_prompt("p", TaskCategory::G, "a", "b").unwrap();
        assert!(g.contains("key creative elements"));
        for c in TaskCategory::ALL {
            let t = render_equivalence_prompt("p", c, "r1 {prompt}", "r2").unwrap();
            assert!(t.contains("Only output YES or NO."));
            assert!(t.contains("Response 1: r1 {prompt}\nResponse 2: r2\n###"));
        }
    }

    fn judgment(judge: &str, pair: (usize, usize), eq: Option<bool>) -> PairJudgment {
        PairJudgment {
            pair,
            judge_model: judge.into(),
            equivalent: eq,
            raw_verdict: String::new(),
        }
    }

    #[test]
    fn aggregation_mean_and_exclusion() {
        let judges: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let mut js = Vec::new();
        for p in canonical_pairs(3) {
            js.push(judgment("a", p, Some(true)));
            js.push(judgment("b", p, Some(p == (0, 1))));
            js.push(judgment("c", p, Some(false)));
        }
        let s = aggregate_judgments(3, &judges, js.clone(), FunctionalAggregation::PerJudgeMean).unwrap();
        assert_eq!(s.per_judge_counts.values().copied().collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(s.mean_count, 2.0);

        let m = aggregate_judgments(3, &judges, js, FunctionalAggregation::MajorityEdges).unwrap();
        // (0,1): a,b yes -> edge; others: only a -> no edge.
        assert_eq!(m.mean_count, 2.0);

        let mut js = Vec::new();
        for p in canonical_pairs(3) {
            js.push(judgment("a", p, None));
            js.push(judgment("b", p, Some(true)));
        }
        let judges = vec!["a".to_string(), "b".to_string()];
        let s = aggregate_judgments(3, &judges, js, FunctionalAggregation::PerJudgeMean).unwrap();
        assert_eq!(s.excluded_judges, vec!["a"]);
        assert_eq!(s.mean_count, 1.0);
    }
}
