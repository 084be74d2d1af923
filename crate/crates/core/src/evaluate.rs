//! Experimental machinery: precision-recall and ROC metrics, stratified
//! splits and folds, grid search, learning curves, leave-one-term-out and
//! top-K discovery among unflagged sentences.
//!
//! Every randomized step derives its generator from one root seed through
//! [`crate::seed::rng_for`] with a fixed path, so a rerun with the same seed
//! reproduces every report bit for bit.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotate::LabeledDataset;
use crate::classify::{ClassifierParams, Score};
use crate::corpus::Sentence;
use crate::error::EvaluateError;
use crate::features::tokenize;
use crate::matrix::FeatureMatrix;
use crate::pipeline::{Featurizer, FeatureMethod, FittedMethod, Item, MethodSpec};
use crate::seed::{derive_seed, rng_for};
use crate::terms::{baseline_flag, TermCatalog};

pub const DEFAULT_TEST_FRACTION: f64 = 0.3;
pub const GRID_SEARCH_FOLDS: usize = 4;
pub const LEARNING_CURVE_FOLDS: usize = 10;
pub const LEARNING_CURVE_POINTS: usize = 20;
pub const LEARNING_CURVE_MIN_FRACTION: f64 = 0.01;
pub const DEFAULT_DISCOVERY_K: usize = 100;

// ---------------------------------------------------------------- metrics

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub threshold: f64,
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub precision: f64,
    pub recall: f64,
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), EvaluateError> {
    if scores.len() != labels.len() {
        return Err(EvaluateError::Length {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(EvaluateError::UndefinedMetric("no scored items".into()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvaluateError::UndefinedMetric(format!("score {i} is not finite")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// One point per distinct score, thresholds descending; items scoring at or
/// above the threshold are predicted positive.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<PRPoint>, EvaluateError> {
    let (pos, _) = check_inputs(scores, labels)?;
    if pos == 0 {
        return Err(EvaluateError::UndefinedMetric(
            "average precision needs at least one positive".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("finite scores"));
    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.push(PRPoint {
            threshold,
            true_positive: tp,
            false_positive: fp,
            false_negative: pos - tp,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / pos as f64,
        });
    }
    Ok(curve)
}

/// `Σ (R_i − R_{i−1}) P_i` over the curve with `R_0 = 0`.
pub fn ap_from_curve(curve: &[PRPoint]) -> f64 {
    let mut prev = 0.0;
    let mut ap = 0.0;
    for p in curve {
        ap += (p.recall - prev) * p.precision;
        prev = p.recall;
    }
    ap
}

pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64, EvaluateError> {
    Ok(ap_from_curve(&pr_curve(scores, labels)?))
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64, EvaluateError> {
    let (pos, neg) = check_inputs(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(EvaluateError::UndefinedMetric("AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    // Twice the concordance count, kept integral.
    let mut twice: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (mut p, mut n) = (0u128, 0u128);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                p += 1;
            } else {
                n += 1;
            }
            i += 1;
        }
        twice += 2 * p * neg_below + p * n;
        neg_below += n;
    }
    Ok(twice as f64 / (2 * pos as u128 * neg as u128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ap,
    Auc,
}

impl Metric {
    pub fn compute(self, scores: &[f64], labels: &[bool]) -> Result<f64, EvaluateError> {
        match self {
            Self::Ap => average_precision(scores, labels),
            Self::Auc => auc_roc(scores, labels),
        }
    }
}

// ---------------------------------------------------------------- reports

/// Where a report came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub dataset_hash: String,
    pub catalog_version: String,
    pub method: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n: usize,
    pub positives: usize,
}

impl DatasetSummary {
    pub fn of(labels: &[bool]) -> Self {
        Self {
            n: labels.len(),
            positives: labels.iter().filter(|&&l| l).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ap: f64,
    pub auc: f64,
    pub n_thresholds: usize,
    pub dataset: DatasetSummary,
    pub provenance: Provenance,
    pub pr_curve: Vec<PRPoint>,
}

pub fn evaluate_scores(
    scores: &[f64],
    labels: &[bool],
    provenance: Provenance,
) -> Result<EvalReport, EvaluateError> {
    let curve = pr_curve(scores, labels)?;
    Ok(EvalReport {
        ap: ap_from_curve(&curve),
        auc: auc_roc(scores, labels)?,
        n_thresholds: curve.len(),
        dataset: DatasetSummary::of(labels),
        provenance,
        pr_curve: curve,
    })
}

// ---------------------------------------------------------------- splits

/// Stratum of an item: HSD label and term group.
pub type StratumKey = (bool, String);

pub fn stratum_name(key: &StratumKey) -> String {
    format!("{}/{}", if key.0 { "hsd" } else { "not-hsd" }, key.1)
}

pub fn stratum_keys(dataset: &LabeledDataset) -> Vec<StratumKey> {
    dataset
        .entries
        .iter()
        .map(|e| (e.hsd, e.term_group.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(seed: u64) -> Self {
        Self {
            test_fraction: DEFAULT_TEST_FRACTION,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    /// Indices in increasing order.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn group_strata(keys: &[StratumKey]) -> BTreeMap<&StratumKey, Vec<usize>> {
    let mut strata: BTreeMap<&StratumKey, Vec<usize>> = BTreeMap::new();
    for (i, k) in keys.iter().enumerate() {
        strata.entry(k).or_default().push(i);
    }
    strata
}

/// Per-stratum test share rounded half down, so a single item stays in train.
fn test_count(size: usize, fraction: f64) -> usize {
    let target = size as f64 * fraction;
    let lower = target.floor();
    if target - lower > 0.5 {
        lower as usize + 1
    } else {
        lower as usize
    }
}

/// Train/test split stratified on every (label × group) combination. Each
/// group must contain both labels.
pub fn stratified_split_keys(keys: &[StratumKey], spec: &SplitSpec) -> Result<Split, EvaluateError> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(EvaluateError::Config(format!(
            "test fraction {} is outside (0, 1)",
            spec.test_fraction
        )));
    }
    if keys.is_empty() {
        return Err(EvaluateError::Config("cannot split an empty dataset".into()));
    }
    let strata = group_strata(keys);
    let groups: std::collections::BTreeSet<&String> = keys.iter().map(|k| &k.1).collect();
    for g in &groups {
        for label in [true, false] {
            let key = (label, (*g).clone());
            if !strata.contains_key(&key) {
                return Err(EvaluateError::EmptyStratum(stratum_name(&key)));
            }
        }
    }
    let mut train = Vec::with_capacity(keys.len());
    let mut test = Vec::new();
    for (key, members) in strata {
        let mut members = members;
        members.shuffle(&mut rng_for(spec.seed, &format!("split/{}", stratum_name(key))));
        let n_test = test_count(members.len(), spec.test_fraction);
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

pub fn stratified_split(dataset: &LabeledDataset, spec: &SplitSpec) -> Result<Split, EvaluateError> {
    stratified_split_keys(&stratum_keys(dataset), spec)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Validation indices of every fold, each in increasing order.
    pub folds: Vec<Vec<usize>>,
    /// Strata smaller than `k`, folded through their label's shared pool.
    pub merged_strata: Vec<String>,
}

impl FoldPlan {
    /// Every index outside fold `f`, in increasing order.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }
}

/// Stratified k-fold assignment. Strata are dealt round-robin with a running
/// offset, positives first, so fold sizes and per-fold label counts differ by
/// at most one.
pub fn kfold_keys(keys: &[StratumKey], k: usize, seed: u64) -> Result<FoldPlan, EvaluateError> {
    if k < 2 {
        return Err(EvaluateError::Folds(format!("k = {k}, need at least 2")));
    }
    if k > keys.len() {
        return Err(EvaluateError::Folds(format!(
            "k = {k} exceeds the {} available items",
            keys.len()
        )));
    }
    let strata = group_strata(keys);
    let mut merged_strata = Vec::new();
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0usize;
    for label in [true, false] {
        let mut pool: Vec<(String, Vec<usize>)> = Vec::new();
        let mut runs: Vec<(String, Vec<usize>)> = Vec::new();
        for (key, members) in strata.iter().filter(|(key, _)| key.0 == label) {
            let name = stratum_name(key);
            if members.len() < k {
                log::warn!("evaluate: stratum {name} has fewer than {k} items; merged into its label pool");
                merged_strata.push(name.clone());
                pool.push((name, members.clone()));
            } else {
                runs.push((name, members.clone()));
            }
        }
        // pooled strata are dealt back to back so each lands in distinct folds
        runs.extend(pool);
        for (name, mut members) in runs {
            members.shuffle(&mut rng_for(seed, &format!("kfold/{k}/{name}")));
            let len = members.len();
            for (j, idx) in members.into_iter().enumerate() {
                folds[(offset + j) % k].push(idx);
            }
            offset += len;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan {
        k,
        folds,
        merged_strata,
    })
}

pub fn kfold(dataset: &LabeledDataset, k: usize, seed: u64) -> Result<FoldPlan, EvaluateError> {
    kfold_keys(&stratum_keys(dataset), k, seed)
}

// ---------------------------------------------------------------- training helpers

pub(crate) fn items_of<'a>(dataset: &'a LabeledDataset, indices: &[usize]) -> Vec<Item<'a>> {
    indices
        .iter()
        .map(|&i| Item {
            id: &dataset.entries[i].sentence_id,
            text: &dataset.entries[i].text,
        })
        .collect()
}

fn labels_of(dataset: &LabeledDataset, indices: &[usize]) -> Vec<bool> {
    indices.iter().map(|&i| dataset.entries[i].hsd).collect()
}

fn scores_vec(scores: &[Score]) -> Vec<f64> {
    scores.iter().map(|s| s.probability()).collect()
}

/// Fits a method on `train` and returns its scores on `test`.
pub fn fit_and_score(
    method: &MethodSpec,
    dataset: &LabeledDataset,
    train: &[usize],
    test: &[usize],
    seed: u64,
) -> Result<Vec<f64>, EvaluateError> {
    let fitted = FittedMethod::fit(
        &method.features,
        &method.classifier,
        &items_of(dataset, train),
        &labels_of(dataset, train),
        seed,
    )?;
    Ok(scores_vec(&fitted.score(&items_of(dataset, test))?))
}

// ---------------------------------------------------------------- grid search

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub index: usize,
    pub params: ClassifierParams,
    pub ap_folds: Vec<f64>,
    pub auc_folds: Vec<f64>,
    pub mean_ap: Option<f64>,
    pub mean_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub metric: Metric,
    pub k: usize,
    pub best: ClassifierParams,
    pub best_index: usize,
    /// Selection under each metric, both reported.
    pub best_by_ap: Option<usize>,
    pub best_by_auc: Option<usize>,
    pub rows: Vec<GridRow>,
    pub provenance: Provenance,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn argmax_first(values: impl Iterator<Item = (usize, Option<f64>)>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|b| b.0)
}

struct PreparedFold {
    x_train: FeatureMatrix,
    y_train: Vec<bool>,
    x_val: FeatureMatrix,
    y_val: Vec<bool>,
    featurizer: Featurizer,
}

/// Scores every grid point by its mean metric over `k` stratified folds and
/// selects the best; ties go to the earlier point in `points` order. Points
/// whose training fails are reported and skipped.
pub fn grid_search(
    features: &FeatureMethod,
    points: &[ClassifierParams],
    dataset: &LabeledDataset,
    k: usize,
    metric: Metric,
    seed: u64,
    catalog_version: &str,
) -> Result<GridSearchReport, EvaluateError> {
    if points.is_empty() {
        return Err(EvaluateError::Config("hyperparameter grid is empty".into()));
    }
    let plan = kfold(dataset, k, seed)?;
    let prepared: Vec<Result<PreparedFold, EvaluateError>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train = plan.train_indices(f);
            let val = &plan.folds[f];
            let train_items = items_of(dataset, &train);
            let featurizer = Featurizer::fit(features, &train_items)?;
            Ok(PreparedFold {
                x_train: featurizer.transform(&train_items)?,
                y_train: labels_of(dataset, &train),
                x_val: featurizer.transform(&items_of(dataset, val))?,
                y_val: labels_of(dataset, val),
                featurizer,
            })
        })
        .collect();
    let prepared = prepared.into_iter().collect::<Result<Vec<_>, _>>()?;

    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..k).map(move |f| (p, f)))
        .collect();
    let outcomes: Vec<Result<(f64, f64), EvaluateError>> = tasks
        .par_iter()
        .map(|&(p, f)| {
            let fold = &prepared[f];
            let model = crate::classify::train(
                &points[p],
                &fold.x_train,
                &fold.y_train,
                derive_seed(seed, &format!("gridsearch/fold/{f}")),
                fold.featurizer.space(),
            )?;
            let scores = scores_vec(&crate::classify::predict(&model, &fold.x_val)?);
            Ok((
                average_precision(&scores, &fold.y_val)?,
                auc_roc(&scores, &fold.y_val)?,
            ))
        })
        .collect();

    let mut rows = Vec::with_capacity(points.len());
    for (p, chunk) in outcomes.chunks(k).enumerate() {
        let mut row = GridRow {
            index: p,
            params: points[p],
            ap_folds: Vec::with_capacity(k),
            auc_folds: Vec::with_capacity(k),
            mean_ap: None,
            mean_auc: None,
            error: None,
        };
        for (f, o) in chunk.iter().enumerate() {
            match o {
                Ok((ap, auc)) => {
                    row.ap_folds.push(*ap);
                    row.auc_folds.push(*auc);
                }
                Err(e) => {
                    log::warn!("evaluate: grid point {p} skipped (fold {f}): {e}");
                    row.error = Some(format!("fold {f}: {e}"));
                    break;
                }
            }
        }
        if row.error.is_none() {
            row.mean_ap = Some(mean(&row.ap_folds));
            row.mean_auc = Some(mean(&row.auc_folds));
        }
        rows.push(row);
    }
    let best_by_ap = argmax_first(rows.iter().map(|r| (r.index, r.mean_ap)));
    let best_by_auc = argmax_first(rows.iter().map(|r| (r.index, r.mean_auc)));
    let best_index = match metric {
        Metric::Ap => best_by_ap,
        Metric::Auc => best_by_auc,
    }
    .ok_or(EvaluateError::NoValidGridPoint)?;
    Ok(GridSearchReport {
        metric,
        k,
        best: points[best_index],
        best_index,
        best_by_ap,
        best_by_auc,
        rows,
        provenance: Provenance {
            seed,
            dataset_hash: dataset.fingerprint(),
            catalog_version: catalog_version.to_string(),
            method: format!("{} grid of {} points", features.describe(), points.len()),
        },
    })
}

// ---------------------------------------------------------------- cross-validation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub fold_ap: Vec<f64>,
    pub mean_ap: f64,
    pub provenance: Provenance,
}

fn cv_model_seed(seed: u64, fold: usize) -> u64 {
    derive_seed(seed, &format!("cv/fold/{fold}"))
}

/// Plain stratified k-fold cross-validation of one method.
pub fn cross_validate(
    method: &MethodSpec,
    dataset: &LabeledDataset,
    k: usize,
    seed: u64,
    catalog_version: &str,
) -> Result<CvReport, EvaluateError> {
    let plan = kfold(dataset, k, seed)?;
    let fold_ap = (0..k)
        .into_par_iter()
        .map(|f| {
            let train = plan.train_indices(f);
            let scores = fit_and_score(method, dataset, &train, &plan.folds[f], cv_model_seed(seed, f))?;
            average_precision(&scores, &labels_of(dataset, &plan.folds[f]))
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(CvReport {
        k,
        mean_ap: mean(&fold_ap),
        fold_ap,
        provenance: Provenance {
            seed,
            dataset_hash: dataset.fingerprint(),
            catalog_version: catalog_version.to_string(),
            method: method.describe(),
        },
    })
}

// ---------------------------------------------------------------- learning curve

/// `n` geometric fractions from `min` to exactly 1.
pub fn log_fractions(n: usize, min: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let mut out: Vec<f64> = (0..n)
        .map(|i| min * (1.0 / min).powf(i as f64 / (n - 1) as f64))
        .collect();
    out[n - 1] = 1.0;
    out
}

/// Subsample of `train` keeping `ceil(fraction × n_label)` items of each
/// label. Per fold and label the items follow one fixed shuffled order, so a
/// smaller fraction's subsample is a prefix of every larger one. The result
/// is in increasing index order.
pub fn nested_subsample(
    train: &[usize],
    labels: &[bool],
    fraction: f64,
    seed: u64,
    fold: usize,
) -> Vec<usize> {
    let mut out = Vec::new();
    for label in [true, false] {
        let mut members: Vec<usize> = train.iter().copied().filter(|&i| labels[i] == label).collect();
        members.shuffle(&mut rng_for(
            seed,
            &format!("learning-curve/fold/{fold}/{}", if label { "hsd" } else { "not-hsd" }),
        ));
        let take = ((fraction * members.len() as f64).ceil() as usize).min(members.len());
        out.extend_from_slice(&members[..take]);
    }
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub fractions: Vec<f64>,
    /// `ap[fold][point]`; `None` where the subsample lacked a class.
    pub ap: Vec<Vec<Option<f64>>>,
    pub train_sizes: Vec<Vec<usize>>,
    pub mean: Vec<Option<f64>>,
    /// Sample standard deviation over the folds with a value.
    pub std: Vec<Option<f64>>,
    pub skipped: Vec<String>,
    pub provenance: Provenance,
}

/// Learning curve over `n_folds` stratified folds: for each fold the method is
/// trained on nested label-stratified subsamples of the other folds and
/// scored on the held-out fold.
pub fn learning_curve(
    method: &MethodSpec,
    dataset: &LabeledDataset,
    n_folds: usize,
    fractions: &[f64],
    seed: u64,
    catalog_version: &str,
) -> Result<LearningCurve, EvaluateError> {
    let plan = kfold(dataset, n_folds, seed)?;
    let labels = dataset.labels();
    let tasks: Vec<(usize, usize)> = (0..n_folds)
        .flat_map(|f| (0..fractions.len()).map(move |p| (f, p)))
        .collect();
    let results: Vec<(usize, Result<Option<f64>, EvaluateError>, Option<String>)> = tasks
        .par_iter()
        .map(|&(f, p)| {
            let train = plan.train_indices(f);
            let sample = nested_subsample(&train, &labels, fractions[p], seed, f);
            let pos = sample.iter().filter(|&&i| labels[i]).count();
            if pos == 0 || pos == sample.len() {
                let msg = format!("fold {f}, fraction {:.4}: subsample has a single class", fractions[p]);
                log::warn!("evaluate: {msg}; skipped");
                return (sample.len(), Ok(None), Some(msg));
            }
            let val = &plan.folds[f];
            let out = fit_and_score(method, dataset, &sample, val, cv_model_seed(seed, f))
                .and_then(|s| average_precision(&s, &labels_of(dataset, val)))
                .map(Some);
            (sample.len(), out, None)
        })
        .collect();

    let mut ap = vec![vec![None; fractions.len()]; n_folds];
    let mut train_sizes = vec![vec![0; fractions.len()]; n_folds];
    let mut skipped = Vec::new();
    for (&(f, p), (size, r, note)) in tasks.iter().zip(results) {
        ap[f][p] = r?;
        train_sizes[f][p] = size;
        skipped.extend(note);
    }
    let mut means = Vec::with_capacity(fractions.len());
    let mut stds = Vec::with_capacity(fractions.len());
    for p in 0..fractions.len() {
        let vals: Vec<f64> = ap.iter().filter_map(|row| row[p]).collect();
        if vals.is_empty() {
            means.push(None);
            stds.push(None);
            continue;
        }
        let m = mean(&vals);
        means.push(Some(m));
        stds.push((vals.len() > 1).then(|| {
            (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
        }));
    }
    Ok(LearningCurve {
        fractions: fractions.to_vec(),
        ap,
        train_sizes,
        mean: means,
        std: stds,
        skipped,
        provenance: Provenance {
            seed,
            dataset_hash: dataset.fingerprint(),
            catalog_version: catalog_version.to_string(),
            method: method.describe(),
        },
    })
}

// ---------------------------------------------------------------- leave one term out

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LotoPartition {
    pub group: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One partition per term group, groups in order of first appearance.
pub fn loto_partitions(dataset: &LabeledDataset) -> Result<Vec<LotoPartition>, EvaluateError> {
    let mut groups: Vec<&str> = Vec::new();
    for e in &dataset.entries {
        if !groups.contains(&e.term_group.as_str()) {
            groups.push(&e.term_group);
        }
    }
    if groups.len() < 2 {
        return Err(EvaluateError::Config(format!(
            "leave-one-term-out needs at least two term groups, found {}",
            groups.len()
        )));
    }
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..dataset.len()).partition(|&i| dataset.entries[i].term_group == g);
        let test_ids: HashSet<&str> = test.iter().map(|&i| dataset.entries[i].sentence_id.as_str()).collect();
        if let Some(&i) = train.iter().find(|&&i| test_ids.contains(dataset.entries[i].sentence_id.as_str())) {
            return Err(EvaluateError::Config(format!(
                "sentence `{}` of held-out group `{g}` also appears in training",
                dataset.entries[i].sentence_id
            )));
        }
        out.push(LotoPartition {
            group: g.to_string(),
            train,
            test,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotoRow {
    pub group: String,
    pub n_train: usize,
    pub n_test: usize,
    pub test_positives: usize,
    /// Method name → AP on the held-out group; `None` when undefined.
    pub ap: BTreeMap<String, Option<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LotoReport {
    pub rows: Vec<LotoRow>,
    pub provenance: Provenance,
}

pub fn leave_one_term_out(
    methods: &[MethodSpec],
    dataset: &LabeledDataset,
    seed: u64,
    catalog_version: &str,
) -> Result<LotoReport, EvaluateError> {
    let parts = loto_partitions(dataset)?;
    let tasks: Vec<(usize, usize)> = (0..parts.len())
        .flat_map(|g| (0..methods.len()).map(move |m| (g, m)))
        .collect();
    let results: Vec<Result<f64, EvaluateError>> = tasks
        .par_iter()
        .map(|&(g, m)| {
            let part = &parts[g];
            let scores = fit_and_score(
                &methods[m],
                dataset,
                &part.train,
                &part.test,
                derive_seed(seed, &format!("loto/{}", part.group)),
            )?;
            average_precision(&scores, &labels_of(dataset, &part.test))
        })
        .collect();
    let mut rows: Vec<LotoRow> = parts
        .iter()
        .map(|p| LotoRow {
            group: p.group.clone(),
            n_train: p.train.len(),
            n_test: p.test.len(),
            test_positives: p.test.iter().filter(|&&i| dataset.entries[i].hsd).count(),
            ap: BTreeMap::new(),
            notes: Vec::new(),
        })
        .collect();
    for (&(g, m), r) in tasks.iter().zip(results) {
        let name = methods[m].name.clone();
        match r {
            Ok(ap) => {
                rows[g].ap.insert(name, Some(ap));
            }
            Err(e) => {
                rows[g].notes.push(format!("{name}: {e}"));
                rows[g].ap.insert(name, None);
            }
        }
    }
    Ok(LotoReport {
        rows,
        provenance: Provenance {
            seed,
            dataset_hash: dataset.fingerprint(),
            catalog_version: catalog_version.to_string(),
            method: methods.iter().map(MethodSpec::describe).collect::<Vec<_>>().join("; "),
        },
    })
}

// ---------------------------------------------------------------- discovery

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryItem {
    pub rank: usize,
    pub sentence_id: String,
    pub text: String,
    pub score: f64,
    /// Suggested categories for the reviewer, derived from word forms.
    pub tags: Vec<String>,
    /// Filled in by a human reviewer.
    pub verdict: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryReport {
    pub k: usize,
    pub candidates: usize,
    pub excluded_flagged: usize,
    pub items: Vec<DiscoveryItem>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

const MALE_SUFFIXES: &[&str] = &["man", "mannen"];
const FEMALE_SUFFIXES: &[&str] = &["ster", "sters", "esse", "essen", "euse", "euses", "trice", "trices"];

/// Word-form hints: occupations ending in -man, and female-only forms such as
/// -ster or -esse.
pub fn suggest_tags(text: &str) -> Vec<String> {
    let tokens = tokenize(text, &Default::default());
    let mut tags = Vec::new();
    let ends = |t: &str, suffixes: &[&str], min_stem: usize| {
        suffixes
            .iter()
            .any(|s| t.len() >= s.len() + min_stem && t.ends_with(s))
    };
    if tokens.iter().any(|t| ends(t, MALE_SUFFIXES, 3)) {
        tags.push("male-suffixed occupation".to_string());
    }
    if tokens.iter().any(|t| ends(t, FEMALE_SUFFIXES, 3)) {
        tags.push("female-only occupation form".to_string());
    }
    tags
}

/// Ranks sentences without an unsuppressed catalog match by model score and
/// returns the top `k` for human review.
pub fn discover_unknown(
    model: &FittedMethod,
    sentences: &[Sentence],
    catalog: &TermCatalog,
    k: usize,
) -> Result<DiscoveryReport, EvaluateError> {
    let unflagged: Vec<&Sentence> = sentences.iter().filter(|s| !baseline_flag(s, catalog)).collect();
    let excluded_flagged = sentences.len() - unflagged.len();
    let items: Vec<Item<'_>> = unflagged
        .iter()
        .map(|s| Item {
            id: &s.id,
            text: &s.text,
        })
        .collect();
    let scores = if items.is_empty() {
        Vec::new()
    } else {
        scores_vec(&model.score(&items)?)
    };
    let mut order: Vec<usize> = (0..unflagged.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let top: Vec<DiscoveryItem> = order
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(rank, i)| DiscoveryItem {
            rank: rank + 1,
            sentence_id: unflagged[i].id.clone(),
            text: unflagged[i].text.clone(),
            score: scores[i],
            tags: suggest_tags(&unflagged[i].text),
            verdict: None,
        })
        .collect();
    let note = if unflagged.is_empty() {
        Some("every sentence matches the catalog; nothing to rank".to_string())
    } else if unflagged.len() < k {
        Some(format!("only {} unflagged candidates, fewer than {k}", unflagged.len()))
    } else {
        None
    };
    Ok(DiscoveryReport {
        k,
        candidates: unflagged.len(),
        excluded_flagged,
        items: top,
        note,
    })
}

// ---------------------------------------------------------------- CSV export

pub fn write_pr_curve_csv(w: impl Write, curve: &[PRPoint]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["threshold", "true_positive", "false_positive", "false_negative", "precision", "recall"])?;
    for p in curve {
        out.write_record([
            p.threshold.to_string(),
            p.true_positive.to_string(),
            p.false_positive.to_string(),
            p.false_negative.to_string(),
            p.precision.to_string(),
            p.recall.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_learning_curve_csv(w: impl Write, lc: &LearningCurve) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["fraction".to_string(), "mean_ap".into(), "std_ap".into()];
    header.extend((0..lc.ap.len()).map(|f| format!("fold_{f}")));
    out.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (p, frac) in lc.fractions.iter().enumerate() {
        let mut rec = vec![frac.to_string(), opt(lc.mean[p]), opt(lc.std[p])];
        rec.extend(lc.ap.iter().map(|row| opt(row[p])));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
