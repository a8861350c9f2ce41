use std::collections::HashSet;

use proptest::prelude::*;
use taskdiv_core::diversity::{
    count_functional_groups, embedding_diversity, mean_vocabulary_diversity, vocabulary_diversity,
};
use taskdiv_core::exec::{self, ExecMode};
use taskdiv_core::providers::EmbeddingVector;
use taskdiv_core::sampling::{join_numbered_responses, split_numbered_responses};
use taskdiv_core::stats::{aggregate, mean_se, MetricRecord};
use taskdiv_core::taxonomy::TaskCategory;

fn components(k: usize, edges: &[(usize, usize)]) -> usize {
    let mut label: Vec<usize> = (0..k).collect();
    // Relabel until stable; quadratic but obviously correct.
    loop {
        let mut changed = false;
        for &(a, b) in edges {
            let m = label[a].min(label[b]);
            if label[a] != m || label[b] != m {
                label[a] = m;
                label[b] = m;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    label.into_iter().collect::<HashSet<_>>().len()
}

fn graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1usize..=8).prop_flat_map(|k| {
        // b = a + 1 + off (mod k) is never a; k = 1 yields no edges.
        let n = if k > 1 { 0..20 } else { 0..1 };
        let edge = (0..k, 0..k.max(2) - 1).prop_map(move |(a, off)| (a, (a + 1 + off) % k));
        (Just(k), prop::collection::vec(edge, n))
    })
}

fn response() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ,.?!:()\n-]{0,40}"
        .prop_map(|s| s.trim().to_string())
        .prop_filter("non-empty", |s| !s.is_empty())
}

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, dim).prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

proptest! {
    #[test]
    fn vocabulary_is_a_bounded_symmetric_distance(a in "[a-z ]{0,30}", b in "[a-zA-Z ,.]{0,30}") {
        let d = vocabulary_diversity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, vocabulary_diversity(&b, &a));
        prop_assert_eq!(vocabulary_diversity(&a, &a), 0.0);
    }

    #[test]
    fn vocabulary_ignores_case_and_punctuation(a in "[a-z ]{1,30}") {
        let shouted = a.to_uppercase().replace(' ', ", ");
        prop_assert_eq!(vocabulary_diversity(&a, &shouted), 0.0);
    }

    #[test]
    fn mean_vocabulary_is_bounded(rs in prop::collection::vec("[a-c ]{0,12}", 2..6)) {
        let m = mean_vocabulary_diversity(&rs).unwrap();
        prop_assert!((0.0..=1.0).contains(&m));
    }

    #[test]
    fn embedding_is_scale_invariant(
        (a, b) in (1usize..12).prop_flat_map(|d| (vector(d), vector(d))),
        s in 1e-3f64..1e3,
        t in 1e-3f64..1e3,
    ) {
        let base = embedding_diversity(&EmbeddingVector::new(a.clone()), &EmbeddingVector::new(b.clone())).unwrap();
        let scaled = embedding_diversity(
            &EmbeddingVector::new(a.iter().map(|x| x * s).collect()),
            &EmbeddingVector::new(b.iter().map(|x| x * t).collect()),
        ).unwrap();
        prop_assert!((0.0..=2.0).contains(&base));
        prop_assert!((base - scaled).abs() < 1e-9);
    }

    #[test]
    fn group_count_matches_label_propagation((k, edges) in graph()) {
        prop_assert_eq!(count_functional_groups(k, &edges).unwrap(), components(k, &edges));
    }

    #[test]
    fn adding_an_edge_never_adds_a_group((k, edges) in graph(), extra in (0usize..8, 0usize..8)) {
        let (a, b) = extra;
        prop_assume!(a < k && b < k && a != b);
        let before = count_functional_groups(k, &edges).unwrap();
        let mut more = edges.clone();
        more.push((a, b));
        let after = count_functional_groups(k, &more).unwrap();
        prop_assert!(after == before || after + 1 == before);
        prop_assert!((1..=k).contains(&after));
    }

    #[test]
    fn edge_order_is_irrelevant((k, mut edges) in graph()) {
        let forward = count_functional_groups(k, &edges).unwrap();
        edges.reverse();
        prop_assert_eq!(forward, count_functional_groups(k, &edges).unwrap());
    }

    #[test]
    fn split_inverts_join(rs in prop::collection::vec(response(), 1..10)) {
        let joined = join_numbered_responses(&rs);
        prop_assert_eq!(split_numbered_responses(&joined, rs.len()).unwrap(), rs);
    }

    #[test]
    fn mean_se_shift_equivariance(xs in prop::collection::vec(-100.0f64..100.0, 2..50), c in -50.0f64..50.0) {
        let (m, se) = mean_se(&xs).unwrap();
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let (m2, se2) = mean_se(&shifted).unwrap();
        prop_assert!((m2 - m - c).abs() < 1e-9);
        prop_assert!((se2 - se).abs() < 1e-9);
        prop_assert!(se >= 0.0);
    }

    #[test]
    fn aggregate_is_permutation_invariant(
        values in prop::collection::vec((0u8..4, 0u8..2, 1.0f64..5.0), 1..40),
        seed in any::<u64>(),
    ) {
        let records: Vec<MetricRecord> = values
            .iter()
            .enumerate()
            .map(|(i, (cat, strat, v))| MetricRecord {
                prompt_id: format!("p{i:03}"),
                model: "m".into(),
                strategy: format!("s{strat}"),
                category: [TaskCategory::A, TaskCategory::B, TaskCategory::G, TaskCategory::H][*cat as usize],
                metric: "functional".into(),
                value: *v,
            })
            .collect();
        let mut shuffled = records.clone();
        taskdiv_core::datasets::shuffle_with_seed(&mut shuffled, seed);
        prop_assert_eq!(aggregate(&records), aggregate(&shuffled));
        let total: usize = aggregate(&records).iter().map(|c| c.n).sum();
        prop_assert_eq!(total, records.len());
    }

    #[test]
    fn exec_modes_agree(n in 0usize..200) {
        let f = |i: usize| (i * i) % 7;
        prop_assert_eq!(exec::map_range(ExecMode::Sequential, n, f), exec::map_range(ExecMode::Parallel, n, f));
    }
}
