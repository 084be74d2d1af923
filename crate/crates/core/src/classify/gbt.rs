//! Gradient-boosted trees on the logistic loss with second-order
//! (gradient/hessian) exact greedy splitting.

use std::ops::{Add, Sub};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::logistic::{sigmoid, softplus};
use super::tree::{build_tree, Criterion, FeatureSampler, Tree};
use crate::matrix::FeatureMatrix;

pub const DEFAULT_ROUNDS: usize = 200;
pub const DEFAULT_EARLY_STOP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub min_child_weight: f64,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub scale_pos_weight: f64,
    pub n_rounds: usize,
    /// Stop once the training loss has not improved for this many rounds.
    pub early_stop_rounds: usize,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            min_child_weight: 1.0,
            learning_rate: 0.3,
            max_depth: 6,
            scale_pos_weight: 2.5,
            n_rounds: DEFAULT_ROUNDS,
            early_stop_rounds: DEFAULT_EARLY_STOP,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct GradStats {
    g: f64,
    h: f64,
}

impl Add for GradStats {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            g: self.g + o.g,
            h: self.h + o.h,
        }
    }
}

impl Sub for GradStats {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self {
            g: self.g - o.g,
            h: self.h - o.h,
        }
    }
}

struct NewtonCriterion<'a> {
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbtParams,
}

impl NewtonCriterion<'_> {
    fn score(&self, s: &GradStats) -> f64 {
        s.g * s.g / (s.h + self.params.lambda)
    }
}

impl Criterion for NewtonCriterion<'_> {
    type Stats = GradStats;

    fn row_stats(&self, row: usize) -> GradStats {
        GradStats {
            g: self.grad[row],
            h: self.hess[row],
        }
    }

    fn splittable(&self, stats: &GradStats, n_rows: usize, depth: usize) -> bool {
        depth < self.params.max_depth && n_rows >= 2 && stats.h >= 2.0 * self.params.min_child_weight
    }

    fn gain(&self, parent: &GradStats, left: &GradStats, right: &GradStats) -> Option<f64> {
        let mcw = self.params.min_child_weight;
        if left.h < mcw || right.h < mcw {
            return None;
        }
        let gain = 0.5 * (self.score(left) + self.score(right) - self.score(parent));
        (gain > 0.0).then_some(gain)
    }

    fn leaf_value(&self, s: &GradStats) -> f64 {
        -self.params.learning_rate * s.g / (s.h + self.params.lambda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_margin: f64,
    pub trees: Vec<Tree>,
}

impl GbtModel {
    pub fn margin(&self, row: &crate::features::SparseVector) -> f64 {
        self.margin_after(row, self.trees.len())
    }

    /// Margin using only the first `rounds` trees.
    pub fn margin_after(&self, row: &crate::features::SparseVector, rounds: usize) -> f64 {
        self.base_margin
            + self.trees[..rounds.min(self.trees.len())]
                .iter()
                .map(|t| t.predict(row))
                .sum::<f64>()
    }
}

/// Mean instance-weighted log loss, positives weighted by `scale_pos_weight`.
pub fn weighted_log_loss(margins: &[f64], y: &[bool], scale_pos_weight: f64) -> f64 {
    let mut loss = 0.0;
    let mut weight = 0.0;
    for (&m, &t) in margins.iter().zip(y) {
        let (w, l) = if t {
            (scale_pos_weight, softplus(-m))
        } else {
            (1.0, softplus(m))
        };
        loss += w * l;
        weight += w;
    }
    loss / weight
}

/// Gradient and hessian of the logistic loss at `margin`; positive
/// instances are scaled by `scale_pos_weight`.
pub fn gradient_pair(margin: f64, label: bool, scale_pos_weight: f64) -> (f64, f64) {
    let p = sigmoid(margin);
    let (w, target) = if label {
        (scale_pos_weight, 1.0)
    } else {
        (1.0, 0.0)
    };
    (w * (p - target), w * p * (1.0 - p))
}

pub(crate) fn fit(x: &FeatureMatrix, y: &[bool], params: &GbtParams) -> (GbtModel, Vec<f64>) {
    let n = x.n_rows();
    let rows: Vec<u32> = (0..n as u32).collect();
    let mut margins = vec![0.0; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::new();
    let mut history = vec![weighted_log_loss(&margins, y, params.scale_pos_weight)];
    let mut best = history[0];
    let mut since_best = 0usize;

    for _ in 0..params.n_rounds {
        for i in 0..n {
            (grad[i], hess[i]) = gradient_pair(margins[i], y[i], params.scale_pos_weight);
        }
        let criterion = NewtonCriterion {
            grad: &grad,
            hess: &hess,
            params,
        };
        let tree = build_tree::<_, ChaCha8Rng>(x, rows.clone(), &criterion, None::<&mut FeatureSampler<ChaCha8Rng>>);
        for (i, m) in margins.iter_mut().enumerate() {
            *m += tree.predict(x.row(i));
        }
        trees.push(tree);
        let loss = weighted_log_loss(&margins, y, params.scale_pos_weight);
        history.push(loss);
        if loss < best {
            best = loss;
            since_best = 0;
        } else {
            since_best += 1;
            if params.early_stop_rounds > 0 && since_best >= params.early_stop_rounds {
                break;
            }
        }
    }
    (
        GbtModel {
            base_margin: 0.0,
            trees,
        },
        history,
    )
}
