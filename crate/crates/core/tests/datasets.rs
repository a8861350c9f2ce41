use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use taskdiv_core::datasets::{
    load_prompts, seeded_subsample, shuffle_with_seed, tally_by_category, InputFormat, PromptRecord, SamplePlan,
};
use taskdiv_core::taxonomy::TaskCategory;
use taskdiv_core::Error;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/datasets").join(name)
}

fn math() -> Vec<PromptRecord> {
    load_prompts(fixture("math_style_100.jsonl"), InputFormat::Jsonl, "math").unwrap()
}

#[test]
fn category_tally_matches_published_breakdown() {
    let records = load_prompts(fixture("tally_300.jsonl"), InputFormat::Jsonl, "mixed").unwrap();
    assert_eq!(records.len(), 300);
    let tally = tally_by_category(&records);
    let expected: BTreeMap<TaskCategory, usize> = [
        (TaskCategory::A, 71),
        (TaskCategory::B, 35),
        (TaskCategory::C, 11),
        (TaskCategory::D, 50),
        (TaskCategory::F, 19),
        (TaskCategory::G, 50),
        (TaskCategory::H, 64),
    ]
    .into_iter()
    .collect();
    assert_eq!(tally, expected);
    assert!(!tally.contains_key(&TaskCategory::E));

    let mut per_source: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &records {
        *per_source.entry(r.field("source").unwrap()).or_default() += 1;
    }
    let sizes: Vec<usize> = per_source.values().copied().collect();
    assert_eq!(sizes, vec![50, 50, 100, 50, 50]);
}

#[test]
fn extra_columns_become_fields() {
    let records = math();
    assert_eq!(records[0].id, "math-000");
    assert_eq!(records[0].gold_answer.as_deref(), Some("1"));
    assert_eq!(records[0].field("level"), Some("Level 1"));
}

#[test]
fn subsample_is_a_prefix_of_the_full_shuffle() {
    let records = math();
    let full = seeded_subsample(&records, &SamplePlan::new(100)).unwrap();
    for n in [0, 1, 10, 50, 99] {
        let part = seeded_subsample(&records, &SamplePlan::new(n)).unwrap();
        assert_eq!(part[..], full[..n]);
    }
}

#[test]
fn seeds_change_the_order() {
    let records = math();
    let a = seeded_subsample(&records, &SamplePlan::new(20)).unwrap();
    let b = seeded_subsample(&records, &SamplePlan::new(20).with_seed(39)).unwrap();
    assert_ne!(a, b);
}

#[test]
fn stratified_plan_takes_count_per_stratum_in_sorted_stratum_order() {
    let records = math();
    let picked = seeded_subsample(&records, &SamplePlan::stratified(10, "level")).unwrap();
    assert_eq!(picked.len(), 50);
    let levels: Vec<&str> = picked.iter().map(|r| r.field("level").unwrap()).collect();
    for (i, chunk) in levels.chunks(10).enumerate() {
        let want = format!("Level {}", i + 1);
        assert!(chunk.iter().all(|l| *l == want), "{chunk:?}");
    }
}

#[test]
fn oversized_requests_are_rejected() {
    let records = math();
    assert!(matches!(seeded_subsample(&records, &SamplePlan::new(101)), Err(Error::Precondition(_))));
    assert!(matches!(
        seeded_subsample(&records, &SamplePlan::stratified(21, "level")),
        Err(Error::Precondition(_))
    ));
    assert!(matches!(
        seeded_subsample(&records, &SamplePlan::stratified(1, "missing")),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn shuffle_is_a_permutation() {
    let mut xs: Vec<u32> = (0..1000).collect();
    shuffle_with_seed(&mut xs, 38);
    assert_ne!(xs, (0..1000).collect::<Vec<_>>());
    xs.sort_unstable();
    assert_eq!(xs, (0..1000).collect::<Vec<_>>());
}

#[test]
fn csv_and_jsonl_agree() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("p.csv");
    let jsonl = dir.path().join("p.jsonl");
    fs::write(&csv, "id,text,category,gold_answer\nq1,\"Hello, world\",A,42\nq2,Second,,\n").unwrap();
    fs::write(
        &jsonl,
        "{\"id\":\"q1\",\"text\":\"Hello, world\",\"category\":\"A\",\"gold_answer\":\"42\"}\n{\"id\":\"q2\",\"text\":\"Second\"}\n",
    )
    .unwrap();
    let a = load_prompts(&csv, InputFormat::Csv, "d").unwrap();
    let b = load_prompts(&jsonl, InputFormat::Jsonl, "d").unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].category, Some(TaskCategory::A));
}

#[test]
fn schema_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.jsonl");
    fs::write(&p, "{\"id\":\"a\",\"text\":\"ok\"}\n{\"id\":\"b\"}\n").unwrap();
    match load_prompts(&p, InputFormat::Jsonl, "d") {
        Err(Error::Schema { line: 2, .. }) => {}
        other => panic!("{other:?}"),
    }
    fs::write(&p, "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\"}\n").unwrap();
    assert!(matches!(load_prompts(&p, InputFormat::Jsonl, "d"), Err(Error::Schema { .. })));
}
