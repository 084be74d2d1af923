//! Acceptance checks. Each criterion prints one PASS or FAIL line; the
//! process exits non-zero if any fails.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vacscreen_core::annotate::{fleiss_kappa, fleiss_kappa_table, AnnotationLabel, AnnotationRecord, LabeledDataset, LabeledEntry};
use vacscreen_core::classify::gbt::GbtParams;
use vacscreen_core::classify::logistic::{balanced_class_weights, LogisticObjective};
use vacscreen_core::classify::{train_gbt, ClassifierParams, FeatureSpace, HyperparameterGrid, LogisticParams, ModelKind};
use vacscreen_core::corpus::{generate_synthetic, Sentence, SyntheticSpec};
use vacscreen_core::evaluate::{
    auc_roc, average_precision, cross_validate, discover_unknown, grid_search, kfold, learning_curve,
    log_fractions, loto_partitions, nested_subsample, stratified_split, Metric, SplitSpec,
    GRID_SEARCH_FOLDS, LEARNING_CURVE_FOLDS, LEARNING_CURVE_MIN_FRACTION, LEARNING_CURVE_POINTS,
};
use vacscreen_core::matrix::FeatureMatrix;
use vacscreen_core::pipeline::{BowConfig, FeatureMethod, FittedMethod, Item, MethodSpec};
use vacscreen_core::terms::{baseline_flag, scan_sentence, TermCatalog};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- metrics

fn brute_force_ap(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let positives = labels.iter().filter(|&&l| l).count() as f64;
    let (mut ap, mut prev) = (0.0, 0.0);
    for t in thresholds {
        let (mut tp, mut fp) = (0.0, 0.0);
        for (s, &l) in scores.iter().zip(labels) {
            if *s >= t {
                if l {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        let recall = tp / positives;
        ap += (recall - prev) * tp / (tp + fp);
        prev = recall;
    }
    ap
}

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut hits, mut pairs) = (0.0, 0.0);
    for (si, _) in scores.iter().zip(labels).filter(|(_, &l)| l) {
        for (sj, _) in scores.iter().zip(labels).filter(|(_, &l)| !l) {
            pairs += 1.0;
            if si > sj {
                hits += 1.0;
            } else if si == sj {
                hits += 0.5;
            }
        }
    }
    hits / pairs
}

fn metric_instances() -> Vec<(Vec<f64>, Vec<bool>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    (0..1000)
        .map(|_| {
            let n = rng.random_range(2..=200);
            let levels = rng.random_range(1..=n);
            let prevalence: f64 = rng.random_range(0.05..0.95);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < prevalence).collect();
            let a = rng.random_range(0..n);
            let b = (a + 1 + rng.random_range(0..n - 1)) % n;
            labels[a] = true;
            labels[b] = false;
            (scores, labels)
        })
        .collect()
}

fn ap_oracle() -> Check {
    let instances = metric_instances();
    let ties = instances
        .iter()
        .filter(|(s, _)| s.iter().map(|v| v.to_bits()).collect::<HashSet<_>>().len() < s.len())
        .count();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (s, y) in &instances {
        worst = worst.max((average_precision(s, y).map_err(|e| e.to_string())? - brute_force_ap(s, y)).abs());
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-12, || format!("max |diff| {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 instances ({ties} with ties), max |diff| {worst:e}, {:.2} s", elapsed.as_secs_f64()))
}

fn auc_oracle() -> Check {
    let mut worst = 0.0f64;
    for (s, y) in &metric_instances() {
        worst = worst.max((auc_roc(s, y).map_err(|e| e.to_string())? - pairwise_auc(s, y)).abs());
    }
    ensure(worst <= 1e-12, || format!("max |diff| {worst:e}"))?;
    Ok(format!("1000 instances, max |diff| {worst:e}"))
}

fn constant_scorer() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    for _ in 0..100 {
        let n = rng.random_range(1..=1000usize);
        let pos = rng.random_range(1..=n);
        let mut labels: Vec<bool> = (0..n).map(|i| i < pos).collect();
        for i in (1..n).rev() {
            labels.swap(i, rng.random_range(0..=i));
        }
        let value: f64 = rng.random();
        let ap = average_precision(&vec![value; n], &labels).map_err(|e| e.to_string())?;
        let prevalence = pos as f64 / n as f64;
        ensure(ap == prevalence, || format!("AP {ap} != prevalence {prevalence} (n={n})"))?;
    }
    Ok("100 prevalences, exact equality".into())
}

// ---------------------------------------------------------------- agreement

fn direct_kappa(table: &[Vec<u64>]) -> f64 {
    let n_subjects = table.len() as f64;
    let n: f64 = table[0].iter().sum::<u64>() as f64;
    let k = table[0].len();
    let mut p_bar = 0.0;
    for row in table {
        p_bar += row.iter().map(|&c| (c * c) as f64).sum::<f64>() - n;
    }
    p_bar /= n_subjects * n * (n - 1.0);
    let p_e: f64 = (0..k)
        .map(|j| (table.iter().map(|r| r[j]).sum::<u64>() as f64 / (n_subjects * n)).powi(2))
        .sum();
    (p_bar - p_e) / (1.0 - p_e)
}

fn names(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("c{j}")).collect()
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

fn fleiss() -> Check {
    let unanimous: Vec<AnnotationRecord> = (0..20)
        .flat_map(|s| {
            (0..5).map(move |a| AnnotationRecord {
                sentence_id: format!("s{s}"),
                annotator_id: format!("a{a}"),
                label: AnnotationLabel::ALL[s % 3],
                timestamp: String::new(),
            })
        })
        .collect();
    let k1 = fleiss_kappa(&unanimous).map_err(|e| e.to_string())?.kappa_overall;
    ensure(k1 == 1.0, || format!("unanimous kappa {k1}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let (mut checked, mut worst, mut perms) = (0, 0.0f64, 0);
    while checked < 500 {
        let subjects = rng.random_range(2..=40);
        let raters = rng.random_range(2..=8u64);
        let k = rng.random_range(2..=4);
        let table: Vec<Vec<u64>> = (0..subjects)
            .map(|_| {
                let mut row = vec![0u64; k];
                for _ in 0..raters {
                    row[rng.random_range(0..k)] += 1;
                }
                row
            })
            .collect();
        let used = (0..k).filter(|&j| table.iter().any(|r| r[j] > 0)).count();
        if used < 2 {
            continue;
        }
        let r = fleiss_kappa_table(&table, &names(k)).map_err(|e| e.to_string())?;
        worst = worst.max((r.kappa_overall - direct_kappa(&table)).abs());
        for p in permutations(k) {
            let permuted: Vec<Vec<u64>> = table.iter().map(|row| p.iter().map(|&j| row[j]).collect()).collect();
            let pnames: Vec<String> = p.iter().map(|&j| format!("c{j}")).collect();
            let q = fleiss_kappa_table(&permuted, &pnames).map_err(|e| e.to_string())?;
            ensure(q.kappa_overall.to_bits() == r.kappa_overall.to_bits(), || {
                format!("permutation {p:?} changed kappa {} -> {}", r.kappa_overall, q.kappa_overall)
            })?;
            for (name, cat) in &r.kappa_per_category {
                let other = q.kappa_per_category[name].kappa;
                ensure(other.map(f64::to_bits) == cat.kappa.map(f64::to_bits), || {
                    format!("permutation {p:?} changed kappa of {name}")
                })?;
            }
            perms += 1;
        }
        checked += 1;
    }
    ensure(worst <= 1e-12, || format!("max |diff| {worst:e}"))?;
    Ok(format!(
        "unanimous = 1.0; 500 tables max |diff| {worst:e}; {perms} permutations bit-identical"
    ))
}

// ---------------------------------------------------------------- classifiers

fn random_data(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (FeatureMatrix, Vec<bool>) {
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d)
            .map(|_| if rng.random::<f64>() < 0.3 { 0.0 } else { rng.random_range(-1.5..1.5) })
            .collect();
        let z: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + rng.random_range(-1.0..1.0);
        y.push(z > 0.3);
        rows.push(row);
    }
    y[0] = true;
    y[1] = false;
    (FeatureMatrix::from_dense(&rows, d).unwrap(), y)
}

fn logistic_gradient() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(4..60);
        let d = rng.random_range(1..10);
        let (x, y) = random_data(&mut rng, n, d);
        let c = [0.01, 0.1, 1.0, 10.0, 100.0][rng.random_range(0..5)];
        let (w_pos, w_neg) = balanced_class_weights(&y);
        let weights: Vec<f64> = y.iter().map(|&l| if l { w_pos } else { w_neg }).collect();
        let obj = LogisticObjective::with_weights(&x, &y, weights, c);
        let theta: Vec<f64> = (0..obj.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, grad) = obj.value_and_gradient(&theta);
        let h = 1e-6;
        let fd: Vec<f64> = (0..theta.len())
            .map(|j| {
                let (mut p, mut m) = (theta.clone(), theta.clone());
                p[j] += h;
                m[j] -= h;
                (obj.value_and_gradient(&p).0 - obj.value_and_gradient(&m).0) / (2.0 * h)
            })
            .collect();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff: Vec<f64> = grad.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / norm(&grad).max(norm(&fd)).max(1e-12);
        worst = worst.max(rel);
    }
    ensure(worst <= 1e-4, || format!("max relative error {worst:e}"))?;
    Ok(format!("50 instances with balanced weights, max relative error {worst:e}"))
}

fn gbt_monotone() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    let mut rounds = 0;
    for dataset in 0..20 {
        let n = rng.random_range(30..150);
        let d = rng.random_range(1..6);
        let (x, y) = random_data(&mut rng, n, d);
        let params = GbtParams {
            min_child_weight: [0.0, 1.0, 2.0][rng.random_range(0..3)],
            learning_rate: [0.3, 0.1, 0.05][rng.random_range(0..3)],
            max_depth: rng.random_range(1..8),
            n_rounds: 200,
            early_stop_rounds: 0,
            ..GbtParams::default()
        };
        let space = FeatureSpace {
            kind: "test".into(),
            dimension: d,
            fingerprint: "t".into(),
        };
        let m = train_gbt(&x, &y, &params, dataset, space).map_err(|e| e.to_string())?;
        let h = &m.training.loss_history;
        ensure(h.len() == 201, || format!("dataset {dataset}: {} losses recorded", h.len()))?;
        for (r, w) in h.windows(2).enumerate() {
            ensure(w[1] <= w[0], || format!("dataset {dataset} round {r}: {} -> {}", w[0], w[1]))?;
        }
        rounds += h.len() - 1;
    }
    Ok(format!("20 datasets, {rounds} rounds, loss never increased"))
}

// ---------------------------------------------------------------- end to end

fn end_to_end() -> Check {
    let start = Instant::now();
    let synth = generate_synthetic(&SyntheticSpec::dutch(5000, 0.288, 2021)).map_err(|e| e.to_string())?;
    let catalog = TermCatalog::default_dutch();
    let flagged: Vec<usize> = (0..synth.sentences.len())
        .filter(|&i| baseline_flag(&synth.sentences[i], &catalog))
        .collect();
    let precision = flagged.iter().filter(|&&i| synth.labels[i]).count() as f64 / flagged.len() as f64;

    let ds = LabeledDataset::from_synthetic(&synth);
    let split = stratified_split(&ds, &SplitSpec::new(2021)).map_err(|e| e.to_string())?;
    let train_ds = ds.subset(&split.train);
    let features = FeatureMethod::Bow(BowConfig::default());
    let points = HyperparameterGrid::default().points(ModelKind::Logistic);
    let grid = grid_search(&features, &points, &train_ds, GRID_SEARCH_FOLDS, Metric::Ap, 2021, catalog.version())
        .map_err(|e| e.to_string())?;
    let c = match grid.best {
        ClassifierParams::Logistic(p) => p.c,
        _ => return Err("grid returned a non-logistic point".into()),
    };
    let item = |i: &usize| Item {
        id: &ds.entries[*i].sentence_id,
        text: &ds.entries[*i].text,
    };
    let train_items: Vec<Item<'_>> = split.train.iter().map(item).collect();
    let test_items: Vec<Item<'_>> = split.test.iter().map(item).collect();
    let labels = ds.labels();
    let train_labels: Vec<bool> = split.train.iter().map(|&i| labels[i]).collect();
    let test_labels: Vec<bool> = split.test.iter().map(|&i| labels[i]).collect();
    let fitted = FittedMethod::fit(&features, &ClassifierParams::Logistic(LogisticParams::with_c(c)), &train_items, &train_labels, 2021)
        .map_err(|e| e.to_string())?;
    let scores: Vec<f64> = fitted
        .score(&test_items)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|s| s.probability())
        .collect();
    let ap = average_precision(&scores, &test_labels).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure((precision - 0.288).abs() <= 0.02, || format!("baseline precision {precision:.4}"))?;
    ensure(ap >= 0.95, || format!("held-out AP {ap:.4}"))?;
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "baseline precision {precision:.4} on {} flagged; BoW+logistic C={c} test AP {ap:.4} (n={}); {:.1} s",
        flagged.len(),
        split.test.len(),
        elapsed.as_secs_f64()
    ))
}

// ---------------------------------------------------------------- splits

fn random_dataset(rng: &mut ChaCha8Rng) -> LabeledDataset {
    let groups = rng.random_range(1..7);
    let mut entries = Vec::new();
    for g in 0..groups {
        let size = rng.random_range(2..120);
        for i in 0..size {
            entries.push(LabeledEntry {
                sentence_id: format!("g{g}-{i}"),
                text: format!("zin nummer {i}"),
                term_group: format!("group-{g}"),
                hsd: i == 0 || (i != 1 && rng.random::<f64>() < 0.3),
            });
        }
    }
    for i in (1..entries.len()).rev() {
        entries.swap(i, rng.random_range(0..=i));
    }
    LabeledDataset {
        entries,
        dropped: Vec::new(),
    }
}

fn strata(ds: &LabeledDataset) -> BTreeMap<(bool, String), Vec<usize>> {
    let mut out: BTreeMap<(bool, String), Vec<usize>> = BTreeMap::new();
    for (i, e) in ds.entries.iter().enumerate() {
        out.entry((e.hsd, e.term_group.clone())).or_default().push(i);
    }
    out
}

fn partition_ok(parts: &[&[usize]], n: usize) -> bool {
    let mut seen = vec![false; n];
    for p in parts {
        for &i in *p {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
    }
    seen.into_iter().all(|s| s)
}

fn splits_and_folds() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1008);
    let (mut folds_checked, mut loto_checked) = (0, 0);
    for d in 0..100 {
        let ds = random_dataset(&mut rng);
        let n = ds.len();
        let fraction = [0.2, 0.3, 0.5][rng.random_range(0..3)];
        let split = stratified_split(&ds, &SplitSpec { test_fraction: fraction, seed: d }).map_err(|e| e.to_string())?;
        ensure(partition_ok(&[&split.train, &split.test], n), || format!("dataset {d}: split is not a partition"))?;
        let test: HashSet<usize> = split.test.iter().copied().collect();
        for (key, members) in strata(&ds) {
            let got = members.iter().filter(|i| test.contains(i)).count() as f64;
            let want = members.len() as f64 * fraction;
            ensure((got - want).abs() <= 1.0, || format!("dataset {d} stratum {key:?}: {got} test items, expected {want}"))?;
        }

        let k = rng.random_range(2..=6).min(n);
        let plan = kfold(&ds, k, d).map_err(|e| e.to_string())?;
        let folds: Vec<&[usize]> = plan.folds.iter().map(Vec::as_slice).collect();
        ensure(partition_ok(&folds, n), || format!("dataset {d}: folds are not a partition"))?;
        for (key, members) in strata(&ds) {
            let set: HashSet<usize> = members.iter().copied().collect();
            for (f, fold) in plan.folds.iter().enumerate() {
                let got = fold.iter().filter(|i| set.contains(i)).count() as f64;
                let want = members.len() as f64 / k as f64;
                ensure((got - want).abs() <= 1.0, || format!("dataset {d} fold {f} stratum {key:?}: {got} vs {want}"))?;
            }
        }
        folds_checked += k;

        if let Ok(parts) = loto_partitions(&ds) {
            for p in &parts {
                let held: HashSet<&str> = ds
                    .entries
                    .iter()
                    .filter(|e| e.term_group == p.group)
                    .map(|e| e.sentence_id.as_str())
                    .collect();
                ensure(p.train.iter().all(|&i| !held.contains(ds.entries[i].sentence_id.as_str())), || {
                    format!("dataset {d}: group {} leaked into training", p.group)
                })?;
                ensure(p.test.len() == held.len(), || format!("dataset {d}: group {} not fully held out", p.group))?;
                loto_checked += 1;
            }
        }
    }
    Ok(format!("100 datasets; {folds_checked} folds; {loto_checked} leave-one-term-out partitions without leaks"))
}

// ---------------------------------------------------------------- learning curve

fn learning_curve_protocol() -> Check {
    let ds = LabeledDataset::from_synthetic(&generate_synthetic(&SyntheticSpec::dutch(1500, 0.288, 77)).map_err(|e| e.to_string())?);
    let method = MethodSpec::new(
        FeatureMethod::Bow(BowConfig::default()),
        ClassifierParams::Logistic(LogisticParams::with_c(1.0)),
    );
    let fractions = log_fractions(LEARNING_CURVE_POINTS, LEARNING_CURVE_MIN_FRACTION);
    let lc = learning_curve(&method, &ds, LEARNING_CURVE_FOLDS, &fractions, 77, "v").map_err(|e| e.to_string())?;
    ensure(lc.ap.len() == 10 && lc.ap.iter().all(|r| r.len() == 20), || "grid is not 10 x 20".into())?;
    ensure(*lc.fractions.last().unwrap() == 1.0, || "last fraction is not 1.0".into())?;
    ensure(lc.fractions.windows(2).all(|w| w[0] < w[1]), || "fractions not increasing".into())?;
    let ratios: Vec<f64> = lc.fractions.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    ensure(ratios.iter().all(|r| (r - ratios[0]).abs() < 1e-9), || "fractions are not log-spaced".into())?;

    let cv = cross_validate(&method, &ds, LEARNING_CURVE_FOLDS, 77, "v").map_err(|e| e.to_string())?;
    for f in 0..10 {
        let last = lc.ap[f][19].ok_or_else(|| format!("fold {f} has no full-size AP"))?;
        ensure(last.to_bits() == cv.fold_ap[f].to_bits(), || format!("fold {f}: {last} vs CV {}", cv.fold_ap[f]))?;
    }

    let plan = kfold(&ds, LEARNING_CURVE_FOLDS, 77).map_err(|e| e.to_string())?;
    let labels = ds.labels();
    for f in 0..10 {
        let train = plan.train_indices(f);
        let mut prev: HashSet<usize> = HashSet::new();
        for &fr in &fractions {
            let sub = nested_subsample(&train, &labels, fr, 77, f);
            let set: HashSet<usize> = sub.iter().copied().collect();
            ensure(prev.is_subset(&set), || format!("fold {f}: subsample at {fr} does not contain the previous one"))?;
            ensure(lc.train_sizes[f][fractions.iter().position(|x| *x == fr).unwrap()] == sub.len(), || {
                format!("fold {f}: reported train size differs at {fr}")
            })?;
            prev = set;
        }
    }
    Ok("10 folds x 20 log-spaced fractions; full-size column bit-identical to 10-fold CV; nesting holds".into())
}

// ---------------------------------------------------------------- determinism

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vacscreen"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

const DETERMINISM_OUTPUTS: &[&str] = &[
    "syn/dataset.json",
    "syn/sentences.jsonl",
    "matches.jsonl",
    "plan.json",
    "split.json",
    "grid.json",
    "features.json",
    "model.json",
    "eval.json",
    "pr.csv",
    "lc.json",
    "lc.csv",
    "loto.json",
    "discover.json",
];

fn pipeline_once(dir: &Path) -> Result<BTreeMap<&'static str, Vec<u8>>, String> {
    std::fs::write(dir.join("cfg.toml"), "seed = 11\ndataset = \"syn/dataset.json\"\n\n[grid.logistic]\nC = [0.1, 1.0, 10.0]\n")
        .map_err(|e| e.to_string())?;
    let steps: &[&[&str]] = &[
        &["--config", "cfg.toml", "synth", "--n", "800", "--out-dir", "syn"],
        &["--config", "cfg.toml", "scan", "--corpus", "syn/sentences.jsonl", "--out", "matches.jsonl"],
        &["--config", "cfg.toml", "assign", "--corpus", "syn/sentences.jsonl", "--roster", "a1,a2,a3,a4,a5", "--overlap", "100", "--out", "plan.json"],
        &["--config", "cfg.toml", "split", "--out", "split.json"],
        &["--config", "cfg.toml", "gridsearch", "--split", "split.json", "--out", "grid.json"],
        &["--config", "cfg.toml", "fit-features", "--split", "split.json", "--out", "features.json"],
        &["--config", "cfg.toml", "train", "--split", "split.json", "--params", "grid.json", "--out", "model.json"],
        &["--config", "cfg.toml", "evaluate", "--model", "model.json", "--split", "split.json", "--out", "eval.json", "--pr-csv", "pr.csv"],
        &["--config", "cfg.toml", "learning-curve", "--out", "lc.json", "--csv", "lc.csv"],
        &["--config", "cfg.toml", "loto", "--compare", "gbt", "--out", "loto.json"],
        &["--config", "cfg.toml", "discover", "--model", "model.json", "--corpus", "extra.jsonl", "--out", "discover.json"],
    ];
    std::fs::write(
        dir.join("extra.jsonl"),
        "{\"id\": \"e1\", \"body\": \"Wij zoeken een stoere bouwvakker. Dames en heren zijn welkom. Je bent een echte kerel.\\n\\nWerken in een jong team.\"}\n",
    )
    .map_err(|e| e.to_string())?;
    for step in steps {
        run_cli(dir, step)?;
    }
    DETERMINISM_OUTPUTS
        .iter()
        .map(|f| std::fs::read(dir.join(f)).map(|b| (*f, b)).map_err(|e| format!("{f}: {e}")))
        .collect()
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = pipeline_once(a.path())?;
    let second = pipeline_once(b.path())?;
    for (name, bytes) in &first {
        ensure(second[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    let timestamps = first.values().any(|b| String::from_utf8_lossy(b).contains("generated_at"));
    ensure(!timestamps, || "a report carries a timestamp".into())?;
    Ok(format!("{} artifacts byte-identical across two runs with seed 11", first.len()))
}

// ---------------------------------------------------------------- discovery

const WORDS: &[&str] = &[
    "wij", "zoeken", "een", "man", "vrouw", "mannelijke", "vrouwelijke", "collega", "kapster", "vakman",
    "jongens", "meisjes", "dames", "en", "heren", "of", "/", "enthousiaste", "team", "kerel", "monteur",
    "in", "Utrecht", "m/v", "mannen", "bestuurder", "die", "ons", "komt", "versterken", "meid", "vent",
];

fn discovery_filter() -> Check {
    let ds = LabeledDataset::from_synthetic(&generate_synthetic(&SyntheticSpec::dutch(600, 0.288, 5)).map_err(|e| e.to_string())?);
    let items: Vec<Item<'_>> = ds.entries.iter().map(|e| Item { id: &e.sentence_id, text: &e.text }).collect();
    let model = FittedMethod::fit(
        &FeatureMethod::Bow(BowConfig::default()),
        &ClassifierParams::Logistic(LogisticParams::with_c(1.0)),
        &items,
        &ds.labels(),
        0,
    )
    .map_err(|e| e.to_string())?;
    let catalog = TermCatalog::default_dutch();
    let mut rng = ChaCha8Rng::seed_from_u64(1011);
    let (mut listed, mut excluded) = (0, 0);
    for c in 0..1000 {
        let n = rng.random_range(1..20);
        let sentences: Vec<Sentence> = (0..n)
            .map(|i| {
                let len = rng.random_range(2..12);
                let words: Vec<&str> = (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
                Sentence::standalone(format!("c{c}-{i}"), &words.join(" "))
            })
            .collect();
        let k = rng.random_range(1..10);
        let report = discover_unknown(&model, &sentences, &catalog, k).map_err(|e| e.to_string())?;
        for item in &report.items {
            let s = sentences.iter().find(|s| s.id == item.sentence_id).unwrap();
            let live = scan_sentence(s, &catalog).iter().filter(|m| !m.suppressed).count();
            ensure(live == 0, || format!("corpus {c}: `{}` has {live} unsuppressed matches", s.text))?;
        }
        listed += report.items.len();
        excluded += report.excluded_flagged;
    }
    Ok(format!("1000 corpora; {listed} suggestions, none flagged; {excluded} flagged sentences excluded"))
}

// ---------------------------------------------------------------- runner

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: &[(&str, fn() -> Check)] = &[
        ("AP oracle equivalence", ap_oracle),
        ("AUC oracle equivalence", auc_oracle),
        ("constant-scorer AP equals prevalence", constant_scorer),
        ("Fleiss kappa", fleiss),
        ("logistic gradient check", logistic_gradient),
        ("GBT training loss monotone", gbt_monotone),
        ("end-to-end synthetic experiment", end_to_end),
        ("split and fold correctness", splits_and_folds),
        ("learning-curve protocol", learning_curve_protocol),
        ("CLI determinism", determinism),
        ("discovery filter", discovery_filter),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
