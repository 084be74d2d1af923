//! Annotation methodology: stratified assignment with a shared overlap
//! subset, three-way labels, Fleiss' kappa and majority-vote pooling.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::corpus::{Sentence, SyntheticCorpus};
use crate::error::AnnotateError;
use crate::features::hex;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnnotationLabel {
    Yes,
    No,
    Unknown,
}

impl AnnotationLabel {
    pub const ALL: [AnnotationLabel; 3] = [Self::Yes, Self::No, Self::Unknown];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Yes => "yes",
            Self::No => "no",
            Self::Unknown => "?",
        }
    }

    fn column(self) -> usize {
        self as usize
    }
}

impl fmt::Display for AnnotationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnnotationLabel {
    type Err = AnnotateError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "yes" => Ok(Self::Yes),
            "no" => Ok(Self::No),
            "?" => Ok(Self::Unknown),
            other => Err(AnnotateError::InvalidLabel(other.to_string())),
        }
    }
}

impl Serialize for AnnotationLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for AnnotationLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sentence_id: String,
    pub annotator_id: String,
    pub label: AnnotationLabel,
    pub timestamp: String,
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, AnnotateError> {
    let file = File::open(path)
        .map_err(|e| AnnotateError::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| AnnotateError::Config(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(&line).map_err(|e| {
            AnnotateError::Config(format!("{}: line {}: {e}", path.display(), i + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_annotations(mut w: impl Write, records: &[AnnotationRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub roster: Vec<String>,
    pub seed: u64,
    /// Sentences rated by every annotator.
    pub overlap: Vec<String>,
    /// Sentences rated by a single annotator.
    pub exclusive: BTreeMap<String, Vec<String>>,
    /// Term group of every planned sentence.
    pub strata: BTreeMap<String, String>,
}

impl AssignmentPlan {
    /// An annotator's queue: the overlap subset, then their exclusive share.
    pub fn queue_for(&self, annotator: &str) -> Vec<String> {
        if !self.roster.iter().any(|a| a == annotator) {
            return Vec::new();
        }
        let mut q = self.overlap.clone();
        q.extend(self.exclusive.get(annotator).into_iter().flatten().cloned());
        q
    }
}

/// Splits `total` over weights by largest remainder; ties go to the earlier item.
fn apportion(total: usize, sizes: &[usize]) -> Vec<usize> {
    let sum: usize = sizes.iter().sum();
    if sum == 0 {
        return vec![0; sizes.len()];
    }
    let mut quota: Vec<usize> = sizes.iter().map(|&s| total * s / sum).collect();
    let mut remainders: Vec<(usize, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(i, &s)| ((total * s) % sum, i))
        .collect();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let missing = total - quota.iter().sum::<usize>();
    for &(_, i) in remainders.iter().take(missing) {
        quota[i] += 1;
    }
    quota
}

/// Stratified assignment. `items` are `(sentence_id, term_group)` pairs.
pub fn plan_assignment(
    items: &[(String, String)],
    roster: &[String],
    overlap_size: usize,
    seed: u64,
) -> Result<AssignmentPlan, AnnotateError> {
    if roster.is_empty() {
        return Err(AnnotateError::Config("annotator roster is empty".into()));
    }
    let unique: HashSet<&String> = roster.iter().collect();
    if unique.len() != roster.len() {
        return Err(AnnotateError::Config("annotator roster has duplicates".into()));
    }
    if overlap_size > items.len() {
        return Err(AnnotateError::Config(format!(
            "overlap size {overlap_size} exceeds the {} available sentences",
            items.len()
        )));
    }
    let mut by_group: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut strata = BTreeMap::new();
    for (id, group) in items {
        if strata.insert(id.clone(), group.clone()).is_some() {
            return Err(AnnotateError::Config(format!("sentence `{id}` listed twice")));
        }
        by_group.entry(group).or_default().push(id);
    }
    let sizes: Vec<usize> = by_group.values().map(Vec::len).collect();
    let quotas = apportion(overlap_size, &sizes);

    let mut overlap = Vec::with_capacity(overlap_size);
    let mut remainder: Vec<&str> = Vec::new();
    for ((group, ids), quota) in by_group.iter_mut().zip(quotas) {
        ids.sort_unstable();
        ids.shuffle(&mut rng_for(seed, &format!("assign/{group}")));
        overlap.extend(ids[..quota].iter().map(|s| s.to_string()));
        remainder.extend(&ids[quota..]);
    }
    let mut exclusive: BTreeMap<String, Vec<String>> =
        roster.iter().map(|a| (a.clone(), Vec::new())).collect();
    for (k, id) in remainder.into_iter().enumerate() {
        exclusive
            .get_mut(&roster[k % roster.len()])
            .expect("roster member")
            .push(id.to_string());
    }
    Ok(AssignmentPlan {
        roster: roster.to_vec(),
        seed,
        overlap,
        exclusive,
        strata,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAgreement {
    /// `None` when the category was never used (or always used).
    pub kappa: Option<f64>,
    pub standard_error: Option<f64>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa_overall: f64,
    pub kappa_per_category: BTreeMap<String, CategoryAgreement>,
    pub subject_count: usize,
    pub rater_count: usize,
    pub category_count: usize,
    /// Mean per-subject agreement P̄.
    pub observed_agreement: f64,
    /// Chance agreement P̄e.
    pub expected_agreement: f64,
    /// Large-sample standard error under the null of chance agreement.
    pub standard_error: Option<f64>,
    pub z: Option<f64>,
    /// Two-sided normal approximation.
    pub p_value: Option<f64>,
    pub significance: String,
}

fn two_sided_p(z: f64) -> f64 {
    statrs::function::erf::erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Fleiss' kappa from a subject × category count table. Every row must sum to
/// the same number of raters `n >= 2`.
pub fn fleiss_kappa_table(
    counts: &[Vec<u64>],
    categories: &[String],
) -> Result<AgreementReport, AnnotateError> {
    let k = categories.len();
    if counts.is_empty() {
        return Err(AnnotateError::Config("no subjects to compare".into()));
    }
    if k < 2 || counts.iter().any(|r| r.len() != k) {
        return Err(AnnotateError::Config(
            "count table rows must have one column per category (at least two)".into(),
        ));
    }
    let n = counts[0].iter().sum::<u64>();
    let bad: Vec<usize> = (0..counts.len())
        .filter(|&i| counts[i].iter().sum::<u64>() != n)
        .collect();
    if !bad.is_empty() {
        return Err(AnnotateError::UnevenRaters {
            subjects: bad.iter().map(|i| format!("row {i}")).collect(),
            found: bad.iter().map(|&i| counts[i].iter().sum::<u64>() as usize).collect(),
            expected: n as usize,
        });
    }
    if n < 2 {
        return Err(AnnotateError::Config("at least two raters per subject are required".into()));
    }
    let big_n = counts.len() as i128;
    let n = n as i128;
    let nn = big_n * n;

    // Exact integer sums; categories enter only through order-free sums.
    let totals: Vec<i128> = (0..k)
        .map(|j| counts.iter().map(|r| r[j] as i128).sum())
        .collect();
    let sum_sq: i128 = counts.iter().flatten().map(|&c| (c as i128) * (c as i128)).sum();
    let agree = sum_sq - nn; // Σ_i Σ_j n_ij (n_ij - 1)
    let d1 = nn * (n - 1);
    let s = totals.iter().map(|c| c * c).sum::<i128>();
    let t = nn * nn;

    let observed = agree as f64 / d1 as f64;
    let expected = s as f64 / t as f64;
    let kappa = if t == s {
        1.0
    } else {
        (agree * t - s * d1) as f64 / (d1 * (t - s)) as f64
    };

    let p: Vec<f64> = totals.iter().map(|&c| c as f64 / nn as f64).collect();
    let pq: Vec<f64> = p.iter().map(|&pj| pj * (1.0 - pj)).collect();
    let sum_pq: f64 = pq.iter().sum();
    let standard_error = (sum_pq > 0.0).then(|| {
        let inner = sum_pq * sum_pq
            - p.iter().zip(&pq).map(|(&pj, &x)| x * (1.0 - 2.0 * pj)).sum::<f64>();
        (2.0 / d1 as f64).sqrt() * inner.max(0.0).sqrt() / sum_pq
    });
    let z = standard_error.filter(|&se| se > 0.0).map(|se| kappa / se);

    let category_se = (2.0 / d1 as f64).sqrt();
    let mut per_category = BTreeMap::new();
    for (j, name) in categories.iter().enumerate() {
        let c = totals[j];
        let kappa_j = (c > 0 && c < nn).then(|| {
            let disagree: i128 = counts
                .iter()
                .map(|r| (r[j] as i128) * (n - r[j] as i128))
                .sum();
            1.0 - (disagree * big_n * n) as f64 / ((n - 1) * c * (nn - c)) as f64
        });
        let z_j = kappa_j.map(|kj| kj / category_se);
        per_category.insert(
            name.clone(),
            CategoryAgreement {
                kappa: kappa_j,
                standard_error: kappa_j.map(|_| category_se),
                z: z_j,
                p_value: z_j.map(two_sided_p),
            },
        );
    }
    Ok(AgreementReport {
        kappa_overall: kappa,
        kappa_per_category: per_category,
        subject_count: counts.len(),
        rater_count: n as usize,
        category_count: k,
        observed_agreement: observed,
        expected_agreement: expected,
        standard_error,
        z,
        p_value: z.map(two_sided_p),
        significance: "approximate".into(),
    })
}

/// Fleiss' kappa over yes / no / ? records of a fully crossed subset.
pub fn fleiss_kappa(records: &[AnnotationRecord]) -> Result<AgreementReport, AnnotateError> {
    let mut by_subject: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records {
        by_subject.entry(&r.sentence_id).or_default().push(r);
    }
    let mut table = Vec::with_capacity(by_subject.len());
    let mut sizes = Vec::with_capacity(by_subject.len());
    for (subject, recs) in &by_subject {
        let mut seen = HashSet::new();
        let mut row = vec![0u64; 3];
        for r in recs {
            if !seen.insert(r.annotator_id.as_str()) {
                return Err(AnnotateError::DuplicateRecord {
                    sentence_id: subject.to_string(),
                    annotator_id: r.annotator_id.clone(),
                });
            }
            row[r.label.column()] += 1;
        }
        sizes.push(recs.len());
        table.push(row);
    }
    // The most common rater count is taken as the expected one.
    let mut freq: BTreeMap<usize, usize> = BTreeMap::new();
    for &s in &sizes {
        *freq.entry(s).or_default() += 1;
    }
    if let Some((&expected, _)) = freq.iter().max_by_key(|(&size, &f)| (f, size)) {
        let offending: Vec<(String, usize)> = by_subject
            .keys()
            .zip(&sizes)
            .filter(|(_, &s)| s != expected)
            .map(|(k, &s)| (k.to_string(), s))
            .collect();
        if !offending.is_empty() {
            return Err(AnnotateError::UnevenRaters {
                subjects: offending.iter().map(|o| o.0.clone()).collect(),
                found: offending.iter().map(|o| o.1).collect(),
                expected,
            });
        }
    }
    let names: Vec<String> = AnnotationLabel::ALL.iter().map(|l| l.to_string()).collect();
    fleiss_kappa_table(&table, &names)
}

/// Records of the overlap subset only.
pub fn overlap_records(records: &[AnnotationRecord], plan: &AssignmentPlan) -> Vec<AnnotationRecord> {
    let overlap: HashSet<&str> = plan.overlap.iter().map(String::as_str).collect();
    records
        .iter()
        .filter(|r| overlap.contains(r.sentence_id.as_str()))
        .cloned()
        .collect()
}

/// Strict majority (more than half of the votes); otherwise `Unknown`.
pub fn majority_label(votes: &[AnnotationLabel]) -> AnnotationLabel {
    let mut counts = [0usize; 3];
    for v in votes {
        counts[v.column()] += 1;
    }
    AnnotationLabel::ALL
        .into_iter()
        .find(|l| 2 * counts[l.column()] > votes.len())
        .unwrap_or(AnnotationLabel::Unknown)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledEntry {
    pub sentence_id: String,
    pub text: String,
    pub term_group: String,
    pub hsd: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub entries: Vec<LabeledEntry>,
    /// Sentences whose pooled label is `?`.
    #[serde(default)]
    pub dropped: Vec<String>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.entries.iter().map(|e| e.hsd).collect()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.text.as_str()).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
            dropped: Vec::new(),
        }
    }

    /// Gold labels of a generated corpus, grouped by planted term group.
    pub fn from_synthetic(corpus: &SyntheticCorpus) -> Self {
        let entries = corpus
            .sentences
            .iter()
            .zip(&corpus.labels)
            .zip(&corpus.groups)
            .map(|((s, &hsd), g)| LabeledEntry {
                sentence_id: s.id.clone(),
                text: s.text.clone(),
                term_group: g.clone(),
                hsd,
            })
            .collect();
        Self {
            entries,
            dropped: Vec::new(),
        }
    }

    /// SHA-256 over the canonical JSON of the entries.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(&self.entries).expect("entries serialize");
        hex(&Sha256::digest(&json))
    }

    pub fn load(path: &Path) -> Result<Self, AnnotateError> {
        let data = std::fs::read_to_string(path)
            .map_err(|e| AnnotateError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&data)
            .map_err(|e| AnnotateError::Config(format!("{}: {e}", path.display())))
    }
}

/// Pools records into the binary dataset: overlap sentences take the strict
/// majority of all raters, exclusive sentences their single record. `?`
/// outcomes, including majority ties, are moved to `dropped`.
pub fn pool_labels(
    records: &[AnnotationRecord],
    plan: &AssignmentPlan,
    sentences: &[Sentence],
) -> Result<LabeledDataset, AnnotateError> {
    let roster: HashSet<&str> = plan.roster.iter().map(String::as_str).collect();
    let overlap: HashSet<&str> = plan.overlap.iter().map(String::as_str).collect();
    let mut votes: HashMap<&str, Vec<(&str, AnnotationLabel)>> = HashMap::new();
    for r in records {
        if !roster.contains(r.annotator_id.as_str()) {
            return Err(AnnotateError::UnknownAnnotator(r.annotator_id.clone()));
        }
        if !plan.strata.contains_key(&r.sentence_id) {
            return Err(AnnotateError::Unplanned(r.sentence_id.clone()));
        }
        let v = votes.entry(&r.sentence_id).or_default();
        if v.iter().any(|(a, _)| *a == r.annotator_id) {
            return Err(AnnotateError::DuplicateRecord {
                sentence_id: r.sentence_id.clone(),
                annotator_id: r.annotator_id.clone(),
            });
        }
        v.push((&r.annotator_id, r.label));
    }
    let texts: HashMap<&str, &str> = sentences
        .iter()
        .map(|s| (s.id.as_str(), s.text.as_str()))
        .collect();

    let mut planned: Vec<&str> = plan.strata.keys().map(String::as_str).collect();
    let position: HashMap<&str, usize> = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    planned.sort_by_key(|id| (position.get(id).copied().unwrap_or(usize::MAX), *id));

    let mut missing = Vec::new();
    let mut dataset = LabeledDataset::default();
    for id in planned {
        let got = votes.get(id).map(Vec::as_slice).unwrap_or(&[]);
        let label = if overlap.contains(id) {
            if got.len() != plan.roster.len() {
                missing.push(format!("{id} ({} of {} raters)", got.len(), plan.roster.len()));
                continue;
            }
            majority_label(&got.iter().map(|v| v.1).collect::<Vec<_>>())
        } else {
            match got {
                [single] => single.1,
                [] => {
                    missing.push(format!("{id} (no record)"));
                    continue;
                }
                _ => {
                    return Err(AnnotateError::Config(format!(
                        "exclusive sentence `{id}` has {} records, expected one",
                        got.len()
                    )))
                }
            }
        };
        if label == AnnotationLabel::Unknown {
            dataset.dropped.push(id.to_string());
            continue;
        }
        let text = texts
            .get(id)
            .ok_or_else(|| AnnotateError::Config(format!("no text for sentence `{id}`")))?;
        dataset.entries.push(LabeledEntry {
            sentence_id: id.to_string(),
            text: text.to_string(),
            term_group: plan.strata[id].clone(),
            hsd: label == AnnotationLabel::Yes,
        });
    }
    if !missing.is_empty() {
        return Err(AnnotateError::MissingRecords(missing.join(", ")));
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use AnnotationLabel::*;

    fn items(groups: &[(&str, usize)]) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (g, n) in groups {
            for i in 0..*n {
                out.push((format!("{g}-{i:04}"), g.to_string()));
            }
        }
        out
    }

    fn roster(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("a{i}")).collect()
    }

    #[test]
    fn paper_scale_assignment() {
        let it = items(&[("g1", 1200), ("g2", 1200), ("g3", 1200), ("g4", 1200), ("g5", 1200)]);
        let plan = plan_assignment(&it, &roster(5), 600, 3).unwrap();
        assert_eq!(plan.overlap.len(), 600);
        for a in &plan.roster {
            assert_eq!(plan.queue_for(a).len(), 1680);
        }
    }

    #[test]
    fn overlap_equal_to_everything_leaves_no_exclusive() {
        let it = items(&[("g1", 7), ("g2", 5)]);
        let plan = plan_assignment(&it, &roster(3), 12, 1).unwrap();
        assert!(plan.exclusive.values().all(Vec::is_empty));
    }

    #[test]
    fn assignment_partitions_and_stratifies() {
        let it = items(&[("a", 997), ("b", 505), ("c", 191), ("d", 220), ("e", 13)]);
        let plan = plan_assignment(&it, &roster(5), 600, 9).unwrap();
        let mut seen = HashSet::new();
        for id in plan.overlap.iter().chain(plan.exclusive.values().flatten()) {
            assert!(seen.insert(id.clone()), "{id} assigned twice");
        }
        assert_eq!(seen.len(), it.len());
        let total = it.len() as f64;
        for g in ["a", "b", "c", "d", "e"] {
            let size = it.iter().filter(|x| x.1 == g).count() as f64;
            let got = plan.overlap.iter().filter(|id| plan.strata[*id] == g).count() as f64;
            assert!((got - 600.0 * size / total).abs() < 1.0, "{g}: {got}");
        }
        let sizes: Vec<usize> = plan.exclusive.values().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn empty_roster_is_rejected() {
        let it = items(&[("g", 3)]);
        assert!(matches!(plan_assignment(&it, &[], 1, 0), Err(AnnotateError::Config(_))));
    }

    #[test]
    fn unanimous_table_is_one() {
        let t = vec![vec![5, 0, 0], vec![0, 5, 0], vec![0, 0, 5], vec![5, 0, 0]];
        let names: Vec<String> = ["yes", "no", "?"].iter().map(|s| s.to_string()).collect();
        let r = fleiss_kappa_table(&t, &names).unwrap();
        assert_eq!(r.kappa_overall, 1.0);
        assert_eq!(r.observed_agreement, 1.0);
    }

    #[test]
    fn fleiss_textbook_example() {
        // Fleiss (1971) style 10 × 5 table with 14 raters, as reproduced in
        // common references: kappa ≈ 0.210.
        let t: Vec<Vec<u64>> = vec![
            vec![0, 0, 0, 0, 14],
            vec![0, 2, 6, 4, 2],
            vec![0, 0, 3, 5, 6],
            vec![0, 3, 9, 2, 0],
            vec![2, 2, 8, 1, 1],
            vec![7, 7, 0, 0, 0],
            vec![3, 2, 6, 3, 0],
            vec![2, 5, 3, 2, 2],
            vec![6, 5, 2, 1, 0],
            vec![0, 2, 2, 3, 7],
        ];
        let names: Vec<String> = (1..=5).map(|i| i.to_string()).collect();
        let r = fleiss_kappa_table(&t, &names).unwrap();
        assert!((r.kappa_overall - 0.20993).abs() < 1e-4, "{}", r.kappa_overall);
        assert!((r.observed_agreement - 0.37802).abs() < 1e-4);
        assert!((r.expected_agreement - 4170.0 / 19600.0).abs() < 1e-12);
    }

    #[test]
    fn unused_category_is_undefined() {
        let recs: Vec<AnnotationRecord> = [("s1", Yes), ("s1", No), ("s2", No), ("s2", No)]
            .iter()
            .enumerate()
            .map(|(i, (s, l))| AnnotationRecord {
                sentence_id: s.to_string(),
                annotator_id: format!("a{}", i % 2),
                label: *l,
                timestamp: "2021-01-01T00:00:00Z".into(),
            })
            .collect();
        let r = fleiss_kappa(&recs).unwrap();
        assert_eq!(r.kappa_per_category["?"].kappa, None);
        assert!(r.kappa_per_category["yes"].kappa.is_some());
    }

    #[test]
    fn uneven_raters_are_listed() {
        let rec = |s: &str, a: &str| AnnotationRecord {
            sentence_id: s.into(),
            annotator_id: a.into(),
            label: Yes,
            timestamp: String::new(),
        };
        let recs = vec![rec("s1", "a"), rec("s1", "b"), rec("s2", "a"), rec("s3", "a"), rec("s3", "b")];
        match fleiss_kappa(&recs) {
            Err(AnnotateError::UnevenRaters { subjects, .. }) => assert_eq!(subjects, vec!["s2"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn majority_rules() {
        assert_eq!(majority_label(&[Yes, Yes, Yes, No, No]), Yes);
        assert_eq!(majority_label(&[Yes, Yes, No, No, Unknown]), Unknown);
        assert_eq!(majority_label(&[No, No, No, Unknown, Unknown]), No);
    }

    #[test]
    fn label_serde() {
        assert_eq!(serde_json::to_string(&Unknown).unwrap(), "\"?\"");
        assert_eq!(serde_json::from_str::<AnnotationLabel>("\"yes\"").unwrap(), Yes);
        assert!(serde_json::from_str::<AnnotationLabel>("\"maybe\"").is_err());
    }
}
