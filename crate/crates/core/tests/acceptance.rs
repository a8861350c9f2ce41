//! Acceptance harness: prints one PASS/FAIL/SKIP line per criterion.
//!
//! Run with `cargo test -p taskdiv-core --test acceptance`. The live smoke
//! run (criterion 7) needs `TASKDIV_LIVE=1` and `TASKDIV_LIVE_CONFIG=<toml>`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::Deserialize;
use taskdiv_core::datasets::{load_prompts, seeded_subsample, InputFormat, SamplePlan};
use taskdiv_core::diversity::{count_functional_groups, embedding_diversity, vocabulary_diversity};
use taskdiv_core::pipeline::{self, files, RunConfig, RunOptions, Stage};
use taskdiv_core::providers::EmbeddingVector;
use taskdiv_core::sampling::{join_numbered_responses, split_numbered_responses};
use taskdiv_core::stats::{mean_se, welch_t_test, AggregateCell};
use taskdiv_core::taxonomy::{majority_vote, parse_category_letter, TaskCategory, VoteKind};
use taskdiv_core::Error;

type Outcome = Result<String, String>;

enum Status {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

struct Rng(ChaCha8Rng);

impl Rng {
    fn new(seed: u64) -> Self {
        Rng(ChaCha8Rng::seed_from_u64(seed))
    }
    fn below(&mut self, n: usize) -> usize {
        (self.0.next_u64() % n as u64) as usize
    }
    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }
}

fn timed(budget: Duration, f: impl FnOnce() -> Outcome) -> Status {
    let start = Instant::now();
    let result = f();
    let elapsed = start.elapsed();
    match result {
        Ok(detail) if elapsed <= budget => Status::Pass(format!("{detail}; {elapsed:.2?}")),
        Ok(detail) => Status::Fail(format!("{detail}; took {elapsed:.2?}, budget {budget:?}")),
        Err(reason) => Status::Fail(reason),
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1 -----------------------------------------------------------------------

fn jaccard_distance_oracle(a: &str, b: &str) -> f64 {
    let sa: HashSet<String> = a.split_whitespace().map(str::to_lowercase).collect();
    let sb: HashSet<String> = b.split_whitespace().map(str::to_lowercase).collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    1.0 - sa.intersection(&sb).count() as f64 / union as f64
}

fn random_sentence(rng: &mut Rng) -> String {
    const WORDS: [&str; 12] = [
        "the", "cat", "Dog", "sat", "on", "mat", "RED", "blue", "runs", "quickly", "home", "tree",
    ];
    let n = rng.below(8);
    (0..n).map(|_| WORDS[rng.below(WORDS.len())]).collect::<Vec<_>>().join(" ")
}

fn metric_correctness() -> Outcome {
    let hand = vocabulary_diversity("the cat sat", "the dog sat");
    check(hand == 0.5, || format!("hand case gave {hand}, expected 0.5"))?;

    let mut rng = Rng::new(1);
    for i in 0..1000 {
        let a = random_sentence(&mut rng);
        let b = random_sentence(&mut rng);
        let ab = vocabulary_diversity(&a, &b);
        let ba = vocabulary_diversity(&b, &a);
        check(ab == ba, || format!("pair {i}: asymmetric {ab} vs {ba}"))?;
        check((0.0..=1.0).contains(&ab), || format!("pair {i}: {ab} out of [0,1]"))?;
        check(vocabulary_diversity(&a, &a) == 0.0, || format!("pair {i}: self distance nonzero"))?;
        let oracle = jaccard_distance_oracle(&a, &b);
        check((ab - oracle).abs() < 1e-15, || format!("pair {i}: {ab} vs oracle {oracle}"))?;
    }

    let v = |xs: &[f64]| EmbeddingVector::new(xs.to_vec());
    let hand_cases: [(&[f64], &[f64], f64); 5] = [
        (&[1.0, 0.0], &[0.0, 1.0], 1.0),
        (&[1.0, 0.0], &[1.0, 1.0], 1.0 - 1.0 / 2f64.sqrt()),
        (&[1.0, 0.0], &[-1.0, 0.0], 2.0),
        (&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], 1.0 - 32.0 / (14f64.sqrt() * 77f64.sqrt())),
        (&[3.0, 4.0], &[3.0, 4.0], 0.0),
    ];
    for (a, b, want) in hand_cases {
        let got = embedding_diversity(&v(a), &v(b)).map_err(|e| e.to_string())?;
        check((got - want).abs() < 1e-9, || format!("cosine {a:?},{b:?}: {got} vs {want}"))?;
    }

    for i in 0..1000 {
        let dim = 1 + rng.below(16);
        let a: Vec<f64> = (0..dim).map(|_| rng.range(-1.0, 1.0)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.range(-1.0, 1.0)).collect();
        let (s, t) = (rng.range(1e-3, 1e3), rng.range(1e-3, 1e3));
        let base = embedding_diversity(&v(&a), &v(&b)).map_err(|e| e.to_string())?;
        let scaled_a: Vec<f64> = a.iter().map(|x| x * s).collect();
        let scaled_b: Vec<f64> = b.iter().map(|x| x * t).collect();
        let scaled = embedding_diversity(&v(&scaled_a), &v(&scaled_b)).map_err(|e| e.to_string())?;
        check((base - scaled).abs() < 1e-9, || format!("vector pair {i}: {base} vs scaled {scaled}"))?;
    }
    Ok("1000 string pairs, 5 hand cosines, 1000 scaled vector pairs".into())
}

// 2 -----------------------------------------------------------------------

fn dfs_components(k: usize, edges: &[(usize, usize)]) -> usize {
    let mut adj = vec![Vec::new(); k];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; k];
    let mut count = 0;
    for start in 0..k {
        if seen[start] {
            continue;
        }
        count += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(u) = stack.pop() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    count
}

fn component_counting() -> Outcome {
    let mut rng = Rng::new(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let k = 1 + rng.below(8);
        let density = rng.unit();
        let edges: Vec<(usize, usize)> = (0..k)
            .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
            .filter(|_| rng.unit() < density)
            .collect();
        let got = count_functional_groups(k, &edges).map_err(|e| e.to_string())?;
        if got != dfs_components(k, &edges) {
            mismatches += 1;
        }
    }
    check(mismatches == 0, || format!("{mismatches} mismatches against DFS"))?;
    Ok("1000 random graphs, 0 mismatches".into())
}

// 3 -----------------------------------------------------------------------

fn random_response(rng: &mut Rng) -> String {
    const TOKENS: [&str; 14] = [
        "alpha", "Beta", "response", "42", "x:", "-", "(note)", "café", "\n", "\n\n", "line", "ok.", "3.", "?",
    ];
    let n = 1 + rng.below(12);
    let body: String = (0..n)
        .map(|_| TOKENS[rng.below(TOKENS.len())])
        .collect::<Vec<_>>()
        .join(" ");
    let trimmed = body.trim();
    if trimmed.is_empty() {
        "word".to_string()
    } else {
        trimmed.to_string()
    }
}

fn parser_round_trip() -> Outcome {
    let mut rng = Rng::new(3);
    for k in 1..=10 {
        for t in 0..100 {
            let tuple: Vec<String> = (0..k).map(|_| random_response(&mut rng)).collect();
            let rendered = join_numbered_responses(&tuple);
            let parsed = split_numbered_responses(&rendered, k).map_err(|e| format!("k={k} tuple {t}: {e}"))?;
            check(parsed == tuple, || format!("k={k} tuple {t}: {parsed:?} != {tuple:?}"))?;
        }
    }
    let malformed = [
        ("# Response 1: a\n# Response 3: c", 3, "missing"),
        ("# Response 1: a\n# Response 1: b\n# Response 2: c", 2, "duplicate"),
        ("# Response 2: a\n# Response 3: b", 2, "missing"),
    ];
    for (raw, k, kind) in malformed {
        match split_numbered_responses(raw, k) {
            Err(Error::MalformedGeneration { reason, .. }) if reason.contains(kind) => {}
            other => return Err(format!("{raw:?}: expected {kind} index error, got {other:?}")),
        }
    }
    Ok("1000 tuples across k=1..10, 3 malformed cases typed".into())
}

// 4 -----------------------------------------------------------------------

#[derive(Deserialize)]
struct MeanSeCase {
    values: Vec<f64>,
    mean: f64,
    se: f64,
}

#[derive(Deserialize)]
struct WelchCase {
    xs: Vec<f64>,
    ys: Vec<f64>,
    t: f64,
    p: f64,
    df: f64,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn statistics() -> Outcome {
    let cases: Vec<MeanSeCase> = read_json(&fixtures().join("oracles/mean_se.json"))?;
    for (i, c) in cases.iter().enumerate() {
        let (m, se) = mean_se(&c.values).map_err(|e| e.to_string())?;
        check((m - c.mean).abs() <= 1e-12 && (se - c.se).abs() <= 1e-12, || {
            format!("mean_se case {i}: ({m}, {se}) vs ({}, {})", c.mean, c.se)
        })?;
    }
    let welch: Vec<WelchCase> = read_json(&fixtures().join("oracles/welch.json"))?;
    for (i, c) in welch.iter().enumerate() {
        let r = welch_t_test(&c.xs, &c.ys).map_err(|e| e.to_string())?;
        check(
            (r.t - c.t).abs() <= 1e-6 && (r.p - c.p).abs() <= 1e-6 && (r.df - c.df).abs() <= 1e-6,
            || format!("welch case {i}: t={} p={} df={} vs t={} p={} df={}", r.t, r.p, r.df, c.t, c.p, c.df),
        )?;
    }
    let same = [2.0, 3.5, 1.25, 4.0];
    let r = welch_t_test(&same, &same).map_err(|e| e.to_string())?;
    check(r.p == 1.0, || format!("identical samples gave p={}", r.p))?;
    Ok(format!("{} mean/se cases, {} Welch pairs, identical-sample p=1", cases.len(), welch.len()))
}

// 5 -----------------------------------------------------------------------

fn canonical_for_letter(letter: char) -> TaskCategory {
    match letter {
        'A' => TaskCategory::A,
        'B' => TaskCategory::B,
        'C' => TaskCategory::C,
        'D' => TaskCategory::D,
        'E' => TaskCategory::F,
        'F' => TaskCategory::G,
        'G' => TaskCategory::H,
        other => panic!("no classifier letter {other}"),
    }
}

fn expected_vote(votes: &[Option<TaskCategory>]) -> Option<(TaskCategory, VoteKind)> {
    let cast: Vec<TaskCategory> = votes.iter().flatten().copied().collect();
    let first = *cast.first()?;
    let distinct: HashSet<TaskCategory> = cast.iter().copied().collect();
    if distinct.len() == 1 {
        return Some((first, VoteKind::Unanimous));
    }
    for c in &cast {
        if cast.iter().filter(|x| *x == c).count() * 2 > cast.len() {
            return Some((*c, VoteKind::Majority));
        }
    }
    Some((first, VoteKind::Tiebreak))
}

fn classification_rule() -> Outcome {
    let letters = ['A', 'B', 'C', 'D', 'E', 'F', 'G'];
    for l in letters {
        let parsed = parse_category_letter(&l.to_string()).map_err(|e| e.to_string())?;
        check(parsed == canonical_for_letter(l), || format!("letter {l} parsed as {parsed:?}"))?;
    }
    let options: Vec<Option<char>> = std::iter::once(None).chain(letters.iter().copied().map(Some)).collect();
    let mut multisets = HashSet::new();
    let mut sequences = 0;
    for a in &options {
        for b in &options {
            for c in &options {
                let raw = [*a, *b, *c];
                let votes: Vec<Option<TaskCategory>> = raw.iter().map(|l| l.map(canonical_for_letter)).collect();
                let got = majority_vote(&votes);
                let want = expected_vote(&votes);
                check(got == want, || format!("votes {raw:?}: got {got:?}, expected {want:?}"))?;
                if let Some((cat, _)) = got {
                    check(cat != TaskCategory::E, || format!("votes {raw:?} produced category E"))?;
                }
                if raw.iter().all(Option::is_some) {
                    let mut key = raw;
                    key.sort();
                    multisets.insert(key);
                }
                sequences += 1;
            }
        }
    }
    check(multisets.len() == 84, || format!("covered {} multisets, expected 84", multisets.len()))?;
    Ok(format!("84 multisets via {sequences} ordered vote sequences incl. abstentions"))
}

// 6 -----------------------------------------------------------------------

fn read_bytes(path: &Path) -> Result<Vec<u8>, String> {
    fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn mock_run(out: &Path) -> Result<u64, String> {
    let mut config = RunConfig::load(fixtures().join("e2e/config.toml")).map_err(|e| e.to_string())?;
    config.output_dir = out.to_path_buf();
    let client = pipeline::mock_client(&config).map_err(|e| e.to_string())?;
    let manifest = pipeline::run_pipeline(&config, &client, &RunOptions::all().backend("mock"))
        .map_err(|e| e.to_string())?;
    check(manifest.stages.len() == Stage::ALL.len(), || "manifest incomplete".into())?;
    Ok(manifest.last_invocation.network_calls)
}

fn deterministic_end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (first, second) = (tmp.path().join("first"), tmp.path().join("second"));
    let calls = mock_run(&first)?;
    check(calls > 0, || "first run made no provider calls".into())?;
    mock_run(&second)?;

    let outputs = ["tables/functional.csv", "plots/gpt-4o_functional.csv", "plots/claude-3-5-sonnet_functional.csv"];
    let golden = fixtures().join("e2e/golden");
    for rel in outputs {
        let a = read_bytes(&first.join(rel))?;
        check(a == read_bytes(&second.join(rel))?, || format!("{rel} differs between runs"))?;
        let name = rel.replace('/', "_");
        check(a == read_bytes(&golden.join(&name))?, || format!("{rel} differs from golden {name}"))?;
    }

    let replay = mock_run(&first)?;
    check(replay == 0, || format!("replay made {replay} provider calls"))?;
    for rel in outputs {
        check(read_bytes(&first.join(rel))? == read_bytes(&second.join(rel))?, || {
            format!("{rel} changed on replay")
        })?;
    }
    Ok(format!("{calls} calls on first run, 0 on replay, {} outputs byte-identical", outputs.len()))
}

// 7 -----------------------------------------------------------------------

const LIVE_MARGIN: f64 = 0.25;

fn live_smoke() -> Status {
    if std::env::var("TASKDIV_LIVE").ok().as_deref() != Some("1") {
        return Status::Skip("set TASKDIV_LIVE=1 and TASKDIV_LIVE_CONFIG to run (flaky-allowed)".into());
    }
    let Ok(path) = std::env::var("TASKDIV_LIVE_CONFIG") else {
        return Status::Fail("TASKDIV_LIVE_CONFIG not set".into());
    };
    match live_orderings(Path::new(&path)) {
        Ok(detail) => Status::Pass(detail),
        Err(reason) => Status::Fail(format!("{reason} (flaky-allowed)")),
    }
}

fn live_orderings(path: &Path) -> Outcome {
    let config = RunConfig::load(path).map_err(|e| e.to_string())?;
    let client = pipeline::http_client(&config).map_err(|e| e.to_string())?;
    pipeline::run_pipeline(&config, &client, &RunOptions::all().resume(true)).map_err(|e| e.to_string())?;
    let cells: Vec<AggregateCell> = pipeline::read_jsonl(&config.output_dir.join(files::CELLS)).map_err(|e| e.to_string())?;
    let model = config.models.first().ok_or("config has no models")?;
    let mean = |strategy: &str, cat: TaskCategory| -> Result<f64, String> {
        cells
            .iter()
            .find(|c| {
                c.key.model == *model && c.key.strategy == strategy && c.key.category == cat && c.key.metric == "functional"
            })
            .map(|c| c.mean)
            .ok_or_else(|| format!("no functional cell for {strategy} in {}", cat.code()))
    };
    let mut detail = BTreeMap::new();
    for (cat, anchored_lower) in [(TaskCategory::A, true), (TaskCategory::G, false), (TaskCategory::H, false)] {
        let anchored = mean("system_prompt_task_anchored", cat)?;
        let general = mean("system_prompt_general", cat)?;
        let ok = if anchored_lower {
            anchored <= general + LIVE_MARGIN
        } else {
            anchored + LIVE_MARGIN >= general
        };
        check(ok, || format!("category {}: anchored {anchored:.2} vs general {general:.2}", cat.code()))?;
        detail.insert(cat.code(), format!("{anchored:.2} vs {general:.2}"));
    }
    Ok(format!("{model}: anchored vs general {detail:?}"))
}

// 8 -----------------------------------------------------------------------

#[derive(Deserialize)]
struct Golden {
    seed: u64,
    u64_stream: Vec<u64>,
    shuffled: Vec<String>,
    stratified_10: BTreeMap<String, Vec<String>>,
}

fn dataset_protocol() -> Outcome {
    let golden: Golden = read_json(&fixtures().join("datasets/golden_seed38.json"))?;
    check(golden.seed == 38, || "golden fixture is not for seed 38".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(golden.seed);
    for (i, want) in golden.u64_stream.iter().enumerate() {
        let got = rng.next_u64();
        check(got == *want, || format!("PRNG word {i}: {got} vs {want}"))?;
    }

    let records = load_prompts(fixtures().join("datasets/math_style_100.jsonl"), InputFormat::Jsonl, "math")
        .map_err(|e| e.to_string())?;
    check(records.len() == 100, || format!("fixture has {} records", records.len()))?;
    let all = seeded_subsample(&records, &SamplePlan::new(100).with_seed(golden.seed)).map_err(|e| e.to_string())?;
    let ids: Vec<&str> = all.iter().map(|r| r.id.as_str()).collect();
    check(ids == golden.shuffled, || "full shuffle differs from golden order".into())?;
    let first10 = seeded_subsample(&records, &SamplePlan::new(10)).map_err(|e| e.to_string())?;
    check(first10.iter().map(|r| r.id.as_str()).eq(golden.shuffled[..10].iter().map(String::as_str)), || {
        "10-prompt subsample is not the golden prefix".into()
    })?;

    let strat = seeded_subsample(&records, &SamplePlan::stratified(10, "level")).map_err(|e| e.to_string())?;
    let mut per: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in &strat {
        per.entry(r.field("level").unwrap_or_default().to_string()).or_default().push(r.id.clone());
    }
    check(per.len() == 5 && per.values().all(|v| v.len() == 10), || {
        format!("stratum sizes {:?}", per.iter().map(|(k, v)| (k, v.len())).collect::<Vec<_>>())
    })?;
    check(per == golden.stratified_10, || "stratified picks differ from golden".into())?;
    Ok("golden order over 100 records, 5 strata x 10".into())
}

type Criterion = (&'static str, Box<dyn FnOnce() -> Status>);

fn main() -> ExitCode {
    let criteria: Vec<Criterion> = vec![
        ("metric correctness", Box::new(|| timed(Duration::from_secs(1), metric_correctness))),
        ("component counting", Box::new(|| timed(Duration::from_secs(5), component_counting))),
        ("parser round-trip", Box::new(|| timed(Duration::from_secs(1), parser_round_trip))),
        ("statistics", Box::new(|| timed(Duration::from_secs(1), statistics))),
        ("classification rule", Box::new(|| timed(Duration::from_secs(1), classification_rule))),
        ("deterministic end-to-end", Box::new(|| timed(Duration::from_secs(30), deterministic_end_to_end))),
        ("live smoke run", Box::new(live_smoke)),
        ("dataset protocol", Box::new(|| timed(Duration::from_secs(1), dataset_protocol))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        match run() {
            Status::Pass(d) => println!("criterion {n} ({name}): PASS  {d}"),
            Status::Skip(d) => println!("criterion {n} ({name}): SKIP  {d}"),
            Status::Fail(d) => {
                // The live run is flaky-allowed and never fails the suite.
                if n != 7 {
                    failed += 1;
                }
                println!("criterion {n} ({name}): FAIL  {d}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
