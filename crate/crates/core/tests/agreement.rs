use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vacscreen_core::annotate::{
    fleiss_kappa, fleiss_kappa_table, plan_assignment, pool_labels, AnnotationLabel,
    AnnotationRecord,
};
use vacscreen_core::corpus::Sentence;
use vacscreen_core::error::AnnotateError;

/// The published formula written out directly from a rater × subject matrix.
fn direct_kappa(ratings: &[Vec<usize>], k: usize) -> (f64, f64, f64) {
    let n_subjects = ratings.len() as f64;
    let n = ratings[0].len() as f64;
    let mut p_bar = 0.0;
    let mut totals = vec![0.0; k];
    for subject in ratings {
        let mut counts = vec![0.0; k];
        for &c in subject {
            counts[c] += 1.0;
            totals[c] += 1.0;
        }
        let agree: f64 = counts.iter().map(|c| c * (c - 1.0)).sum();
        p_bar += agree / (n * (n - 1.0));
    }
    p_bar /= n_subjects;
    let p_e: f64 = totals.iter().map(|t| (t / (n_subjects * n)).powi(2)).sum();
    ((p_bar - p_e) / (1.0 - p_e), p_bar, p_e)
}

fn to_table(ratings: &[Vec<usize>], k: usize) -> Vec<Vec<u64>> {
    ratings
        .iter()
        .map(|r| {
            let mut row = vec![0u64; k];
            for &c in r {
                row[c] += 1;
            }
            row
        })
        .collect()
}

fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

#[test]
fn kappa_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 500 {
        let subjects = rng.random_range(2..=30);
        let raters = rng.random_range(2..=7);
        let k = rng.random_range(2..=4);
        let ratings: Vec<Vec<usize>> = (0..subjects)
            .map(|_| (0..raters).map(|_| rng.random_range(0..k)).collect())
            .collect();
        let (kappa, p_bar, p_e) = direct_kappa(&ratings, k);
        if (1.0 - p_e).abs() < 1e-9 {
            continue;
        }
        let r = fleiss_kappa_table(&to_table(&ratings, k), &names(k)).unwrap();
        assert!((r.kappa_overall - kappa).abs() <= 1e-12, "{} vs {kappa}", r.kappa_overall);
        assert!((r.observed_agreement - p_bar).abs() <= 1e-12);
        assert!((r.expected_agreement - p_e).abs() <= 1e-12);
        assert!((-1.0..=1.0).contains(&r.kappa_overall));
        checked += 1;
    }
}

#[test]
fn unanimous_records_give_one() {
    let labels = [AnnotationLabel::Yes, AnnotationLabel::No, AnnotationLabel::Unknown];
    let records: Vec<AnnotationRecord> = (0..12)
        .flat_map(|s| {
            (0..5).map(move |a| AnnotationRecord {
                sentence_id: format!("s{s}"),
                annotator_id: format!("a{a}"),
                label: labels[s % 3],
                timestamp: "2021-03-01T10:00:00Z".into(),
            })
        })
        .collect();
    let r = fleiss_kappa(&records).unwrap();
    assert_eq!(r.kappa_overall, 1.0);
    assert_eq!(r.significance, "approximate");
}

#[test]
fn duplicate_rating_is_rejected() {
    let rec = |a: &str| AnnotationRecord {
        sentence_id: "s".into(),
        annotator_id: a.into(),
        label: AnnotationLabel::Yes,
        timestamp: String::new(),
    };
    assert!(matches!(
        fleiss_kappa(&[rec("a"), rec("a")]),
        Err(AnnotateError::DuplicateRecord { .. })
    ));
}

fn rating_table() -> impl Strategy<Value = (Vec<Vec<u64>>, usize)> {
    (2usize..5, 2u64..7, 1usize..25).prop_flat_map(|(k, n, subjects)| {
        prop::collection::vec(prop::collection::vec(0usize..k, n as usize), subjects)
            .prop_map(move |ratings| (to_table(&ratings, k), k))
    })
}

proptest! {
    #[test]
    fn category_permutation_is_exact((table, k) in rating_table(), shift in 1usize..4) {
        let perm: Vec<usize> = (0..k).map(|j| (j + shift) % k).collect();
        let permuted: Vec<Vec<u64>> = table
            .iter()
            .map(|row| perm.iter().map(|&j| row[j]).collect())
            .collect();
        let names_a = names(k);
        let names_b: Vec<String> = perm.iter().map(|&j| names_a[j].clone()).collect();
        let a = fleiss_kappa_table(&table, &names_a).unwrap();
        let b = fleiss_kappa_table(&permuted, &names_b).unwrap();
        prop_assert_eq!(a.kappa_overall.to_bits(), b.kappa_overall.to_bits());
        prop_assert_eq!(a.observed_agreement.to_bits(), b.observed_agreement.to_bits());
        for name in &names_a {
            prop_assert_eq!(
                a.kappa_per_category[name].kappa.map(f64::to_bits),
                b.kappa_per_category[name].kappa.map(f64::to_bits)
            );
        }
    }

    #[test]
    fn unanimous_subject_never_lowers_observed_agreement((table, k) in rating_table(), c in 0usize..4) {
        let n: u64 = table[0].iter().sum();
        let before = fleiss_kappa_table(&table, &names(k)).unwrap().observed_agreement;
        let mut extended = table.clone();
        let mut row = vec![0u64; k];
        row[c % k] = n;
        extended.push(row);
        let after = fleiss_kappa_table(&extended, &names(k)).unwrap().observed_agreement;
        prop_assert!(after >= before - 1e-15);
    }

    #[test]
    fn unused_category_is_undefined((table, k) in rating_table()) {
        let mut widened = table.clone();
        for row in &mut widened {
            row.push(0);
        }
        let mut n = names(k);
        n.push("never".into());
        let r = fleiss_kappa_table(&widened, &n).unwrap();
        prop_assert!(r.kappa_per_category["never"].kappa.is_none());
    }
}

fn items(sizes: &[usize]) -> Vec<(String, String)> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(g, &n)| (0..n).map(move |i| (format!("g{g}-s{i}"), format!("group-{g}"))))
        .collect()
}

proptest! {
    #[test]
    fn plan_partitions_and_stratifies(
        sizes in prop::collection::vec(1usize..60, 1..7),
        roster_size in 1usize..7,
        overlap_share in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let it = items(&sizes);
        let overlap = (it.len() as f64 * overlap_share) as usize;
        let roster: Vec<String> = (0..roster_size).map(|i| format!("a{i}")).collect();
        let plan = plan_assignment(&it, &roster, overlap, seed).unwrap();
        prop_assert_eq!(plan.overlap.len(), overlap);
        let mut seen = HashSet::new();
        for id in plan.overlap.iter().chain(plan.exclusive.values().flatten()) {
            prop_assert!(seen.insert(id.clone()));
        }
        prop_assert_eq!(seen.len(), it.len());
        let total = it.len() as f64;
        for (g, &size) in sizes.iter().enumerate() {
            let group = format!("group-{g}");
            let in_overlap = plan.overlap.iter().filter(|id| plan.strata[*id] == group).count() as f64;
            prop_assert!((in_overlap - overlap as f64 * size as f64 / total).abs() < 1.0);
            let per: Vec<usize> = plan
                .exclusive
                .values()
                .map(|v| v.iter().filter(|id| plan.strata[*id] == group).count())
                .collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
        let loads: Vec<usize> = plan.exclusive.values().map(Vec::len).collect();
        prop_assert!(loads.iter().max().unwrap() - loads.iter().min().unwrap() <= 1);
        prop_assert_eq!(plan_assignment(&it, &roster, overlap, seed).unwrap(), plan);
    }

    #[test]
    fn pooling_accounts_for_every_subject(seed in any::<u64>(), votes in prop::collection::vec(0usize..3, 40 * 5)) {
        let it = items(&[30, 30]);
        let roster: Vec<String> = (0..5).map(|i| format!("a{i}")).collect();
        let plan = plan_assignment(&it, &roster, 20, seed).unwrap();
        let sentences: Vec<Sentence> = it.iter().map(|(id, _)| Sentence::standalone(id.clone(), "tekst van de zin")).collect();
        let label = |v: usize| AnnotationLabel::ALL[v];
        let mut records = Vec::new();
        let mut next = votes.iter().copied().cycle();
        for id in &plan.overlap {
            for a in &roster {
                records.push(AnnotationRecord { sentence_id: id.clone(), annotator_id: a.clone(), label: label(next.next().unwrap()), timestamp: String::new() });
            }
        }
        for (a, ids) in &plan.exclusive {
            for id in ids {
                records.push(AnnotationRecord { sentence_id: id.clone(), annotator_id: a.clone(), label: label(next.next().unwrap()), timestamp: String::new() });
            }
        }
        let ds = pool_labels(&records, &plan, &sentences).unwrap();
        prop_assert_eq!(ds.entries.len() + ds.dropped.len(), it.len());
        let dropped: HashSet<&String> = ds.dropped.iter().collect();
        prop_assert!(ds.entries.iter().all(|e| !dropped.contains(&e.sentence_id)));
        let by_id: BTreeMap<&str, bool> = ds.entries.iter().map(|e| (e.sentence_id.as_str(), e.hsd)).collect();
        for (a, ids) in &plan.exclusive {
            for id in ids {
                let r = records.iter().find(|r| &r.sentence_id == id && &r.annotator_id == a).unwrap();
                match r.label {
                    AnnotationLabel::Yes => prop_assert_eq!(by_id[id.as_str()], true),
                    AnnotationLabel::No => prop_assert_eq!(by_id[id.as_str()], false),
                    AnnotationLabel::Unknown => prop_assert!(dropped.contains(id)),
                }
            }
        }
    }
}

#[test]
fn missing_overlap_vote_is_an_error() {
    let it = items(&[4]);
    let roster = vec!["a".to_string(), "b".to_string()];
    let plan = plan_assignment(&it, &roster, 4, 1).unwrap();
    let sentences: Vec<Sentence> = it.iter().map(|(id, _)| Sentence::standalone(id.clone(), "x y")).collect();
    let records: Vec<AnnotationRecord> = plan
        .overlap
        .iter()
        .map(|id| AnnotationRecord {
            sentence_id: id.clone(),
            annotator_id: "a".into(),
            label: AnnotationLabel::Yes,
            timestamp: String::new(),
        })
        .collect();
    assert!(matches!(
        pool_labels(&records, &plan, &sentences),
        Err(AnnotateError::MissingRecords(_))
    ));
}
