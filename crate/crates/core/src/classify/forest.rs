//! Random forest: bootstrap samples, class-weighted Gini splits and √d
//! feature subsampling per split.
//!
//! Rows are put into a canonical content order before any sampling, so the
//! fitted forest does not depend on the order of the training rows.

use std::ops::{Add, Sub};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::balanced_class_weights;
use super::tree::{build_tree, Criterion, FeatureSampler, Tree};
use crate::matrix::FeatureMatrix;
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub max_depth: usize,
    pub n_estimators: usize,
    pub min_samples_split: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            max_depth: 50,
            n_estimators: 200,
            min_samples_split: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ClassStats {
    pos: f64,
    neg: f64,
}

impl Add for ClassStats {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            pos: self.pos + o.pos,
            neg: self.neg + o.neg,
        }
    }
}

impl Sub for ClassStats {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            pos: self.pos - o.pos,
            neg: self.neg - o.neg,
        }
    }
}

/// Total weight times Gini impurity.
fn weighted_gini(s: &ClassStats) -> f64 {
    let w = s.pos + s.neg;
    if w <= 0.0 {
        0.0
    } else {
        w - (s.pos * s.pos + s.neg * s.neg) / w
    }
}

struct GiniCriterion<'a> {
    /// Bootstrap multiplicity times class weight, per canonical row.
    weight: &'a [f64],
    label: &'a [bool],
    params: &'a ForestParams,
}

impl Criterion for GiniCriterion<'_> {
    type Stats = ClassStats;

    fn row_stats(&self, row: usize) -> ClassStats {
        if self.label[row] {
            ClassStats {
                pos: self.weight[row],
                neg: 0.0,
            }
        } else {
            ClassStats {
                pos: 0.0,
                neg: self.weight[row],
            }
        }
    }

    fn splittable(&self, stats: &ClassStats, n_rows: usize, depth: usize) -> bool {
        depth < self.params.max_depth
            && n_rows >= self.params.min_samples_split.max(2)
            && stats.pos > 0.0
            && stats.neg > 0.0
    }

    fn gain(&self, parent: &ClassStats, left: &ClassStats, right: &ClassStats) -> Option<f64> {
        Some(weighted_gini(parent) - weighted_gini(left) - weighted_gini(right))
    }

    fn leaf_value(&self, s: &ClassStats) -> f64 {
        let w = s.pos + s.neg;
        if w > 0.0 {
            s.pos / w
        } else {
            0.5
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn score(&self, row: &crate::features::SparseVector) -> f64 {
        if self.trees.is_empty() {
            return 0.5;
        }
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Row order by content: label, then the sparse entries compared lexically.
fn canonical_order(x: &FeatureMatrix, y: &[bool]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    order.sort_by(|&a, &b| {
        y[a].cmp(&y[b]).then_with(|| {
            let (ra, rb) = (x.row(a), x.row(b));
            for ((ia, va), (ib, vb)) in ra.iter().zip(rb.iter()) {
                let c = ia.cmp(&ib).then(va.total_cmp(&vb));
                if c.is_ne() {
                    return c;
                }
            }
            ra.nnz().cmp(&rb.nnz())
        })
    });
    order
}

pub(crate) fn fit(x: &FeatureMatrix, y: &[bool], params: &ForestParams, seed: u64) -> ForestModel {
    let order = canonical_order(x, y);
    let cx = x.select(&order);
    let cy: Vec<bool> = order.iter().map(|&i| y[i]).collect();
    let n = cy.len();
    let (wn, wp) = balanced_class_weights(&cy);
    let max_features = ((x.dim() as f64).sqrt() as usize).max(1);

    let trees = (0..params.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(seed, &format!("forest/tree/{t}"));
            let mut multiplicity = vec![0u32; n];
            for _ in 0..n {
                multiplicity[rng.random_range(0..n)] += 1;
            }
            let weight: Vec<f64> = multiplicity
                .iter()
                .zip(&cy)
                .map(|(&m, &label)| m as f64 * if label { wp } else { wn })
                .collect();
            let rows: Vec<u32> = (0..n as u32).filter(|&r| multiplicity[r as usize] > 0).collect();
            let criterion = GiniCriterion {
                weight: &weight,
                label: &cy,
                params,
            };
            let mut sampler = FeatureSampler { rng, max_features };
            build_tree(&cx, rows, &criterion, Some(&mut sampler))
        })
        .collect();
    ForestModel { trees }
}
