//! Exact greedy binary trees over sparse rows.
//!
//! Absent entries read as 0. At every node the candidate thresholds of a
//! feature are the midpoints between its consecutive distinct values among
//! the node's rows (zeros included), and rows with `x[f] <= threshold` go
//! left. The split criterion is supplied by the caller.

use std::ops::{Add, Sub};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::features::SparseVector;
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &SparseVector) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row.get(*feature) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + go(t, *left as usize).max(go(t, *right as usize))
                }
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

pub(crate) trait Criterion {
    type Stats: Copy + Default + Add<Output = Self::Stats> + Sub<Output = Self::Stats>;

    fn row_stats(&self, row: usize) -> Self::Stats;
    /// Whether a node with these statistics may be split at all.
    fn splittable(&self, stats: &Self::Stats, n_rows: usize, depth: usize) -> bool;
    /// Score of a candidate split; `None` rejects it.
    fn gain(&self, parent: &Self::Stats, left: &Self::Stats, right: &Self::Stats) -> Option<f64>;
    fn leaf_value(&self, stats: &Self::Stats) -> f64;
}

/// Per-split feature subsampling: features that are constant within the node
/// are skipped, `max_features` of the rest are tried in random order, and the
/// search continues past that budget only while no valid split was found.
pub(crate) struct FeatureSampler<R: Rng> {
    pub rng: R,
    pub max_features: usize,
}

struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a / 2.0 + b / 2.0;
    if m >= b || m < a {
        a
    } else {
        m
    }
}

pub(crate) fn build_tree<C: Criterion, R: Rng>(
    x: &FeatureMatrix,
    rows: Vec<u32>,
    criterion: &C,
    mut sampler: Option<&mut FeatureSampler<R>>,
) -> Tree {
    let mut nodes: Vec<Node> = vec![Node::Leaf { value: 0.0 }];
    // (node slot, rows, depth)
    let mut stack = vec![(0usize, rows, 0usize)];
    while let Some((slot, rows, depth)) = stack.pop() {
        let total = rows
            .iter()
            .fold(C::Stats::default(), |acc, &r| acc + criterion.row_stats(r as usize));
        let split = if criterion.splittable(&total, rows.len(), depth) {
            best_split(x, &rows, &total, criterion, sampler.as_deref_mut())
        } else {
            None
        };
        let Some(split) = split else {
            nodes[slot] = Node::Leaf {
                value: criterion.leaf_value(&total),
            };
            continue;
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&r| x.row(r as usize).get(split.feature) <= split.threshold);
        let left = nodes.len();
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });
        nodes[slot] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: left as u32,
            right: (left + 1) as u32,
        };
        stack.push((left + 1, right_rows, depth + 1));
        stack.push((left, left_rows, depth + 1));
    }
    Tree { nodes }
}

fn best_split<C: Criterion, R: Rng>(
    x: &FeatureMatrix,
    rows: &[u32],
    total: &C::Stats,
    criterion: &C,
    sampler: Option<&mut FeatureSampler<R>>,
) -> Option<Candidate> {
    // Non-zero entries of the node, grouped by feature and sorted by value.
    let mut entries: Vec<(usize, f64, u32)> = Vec::new();
    for &r in rows {
        for (f, v) in x.row(r as usize).iter() {
            entries.push((f, v, r));
        }
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut features: Vec<(usize, std::ops::Range<usize>)> = Vec::new();
    let mut start = 0;
    while start < entries.len() {
        let f = entries[start].0;
        let mut end = start;
        while end < entries.len() && entries[end].0 == f {
            end += 1;
        }
        let has_zeros = end - start < rows.len();
        let varies = entries[start].1 != entries[end - 1].1;
        if has_zeros || varies {
            features.push((f, start..end));
        }
        start = end;
    }

    let mut best: Option<Candidate> = None;
    match sampler {
        None => {
            for (f, range) in &features {
                scan_feature(*f, &entries[range.clone()], rows.len(), total, criterion, &mut best);
            }
        }
        Some(s) => {
            features.shuffle(&mut s.rng);
            for (tried, (f, range)) in features.iter().enumerate() {
                if tried >= s.max_features && best.is_some() {
                    break;
                }
                scan_feature(*f, &entries[range.clone()], rows.len(), total, criterion, &mut best);
            }
        }
    }
    best
}

fn scan_feature<C: Criterion>(
    feature: usize,
    entries: &[(usize, f64, u32)],
    n_rows: usize,
    total: &C::Stats,
    criterion: &C,
    best: &mut Option<Candidate>,
) {
    // Distinct value groups in increasing order, with the implicit zeros
    // inserted between the negative and positive entries.
    let mut groups: Vec<(f64, C::Stats)> = Vec::new();
    let n_zero = n_rows - entries.len();
    let mut nonzero_sum = C::Stats::default();
    let mut zero_inserted = n_zero == 0;
    let mut i = 0;
    while i < entries.len() {
        let v = entries[i].1;
        if !zero_inserted && v > 0.0 {
            groups.push((0.0, C::Stats::default()));
            zero_inserted = true;
        }
        let mut acc = C::Stats::default();
        while i < entries.len() && entries[i].1 == v {
            acc = acc + criterion.row_stats(entries[i].2 as usize);
            i += 1;
        }
        nonzero_sum = nonzero_sum + acc;
        groups.push((v, acc));
    }
    if !zero_inserted {
        groups.push((0.0, C::Stats::default()));
    }
    if n_zero > 0 {
        let zero_stats = *total - nonzero_sum;
        if let Some(g) = groups.iter_mut().find(|g| g.0 == 0.0) {
            g.1 = zero_stats;
        }
    }

    let mut left = C::Stats::default();
    for k in 0..groups.len().saturating_sub(1) {
        left = left + groups[k].1;
        let right = *total - left;
        if let Some(gain) = criterion.gain(total, &left, &right) {
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                *best = Some(Candidate {
                    gain,
                    feature,
                    threshold: midpoint(groups[k].0, groups[k + 1].0),
                });
            }
        }
    }
}
