//! L2-regularized, class-weighted logistic regression fitted with L-BFGS.
//!
//! Objective over parameters `(w, b)`:
//!
//! ```text
//! J(w, b) = (1/N) Σ s_i · log(1 + exp(-t_i (w·x_i + b))) + ||w||² / (2C)
//! ```
//!
//! with `t_i = ±1` and `s_i` the balanced class weight `N / (2 N_c)` of the
//! row's class. The bias is not penalized. Using the mean rather than the sum
//! of the weighted loss makes the optimum invariant to duplicating the data.

use serde::{Deserialize, Serialize};

use crate::matrix::FeatureMatrix;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticParams {
    #[serde(rename = "C")]
    pub c: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        Self::with_c(1.0)
    }
}

impl LogisticParams {
    pub fn with_c(c: f64) -> Self {
        Self {
            c,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub iterations: usize,
    pub converged: bool,
    pub gradient_max_norm: f64,
    pub objective: f64,
}

/// Balanced class weights `(negative, positive)`: `N / (2 N_c)`.
pub fn balanced_class_weights(y: &[bool]) -> (f64, f64) {
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&t| t).count() as f64;
    let neg = n - pos;
    (n / (2.0 * neg), n / (2.0 * pos))
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// The training objective, exposed so its gradient can be checked
/// independently.
pub struct LogisticObjective<'a> {
    x: &'a FeatureMatrix,
    y: &'a [bool],
    sample_weights: Vec<f64>,
    inv_c: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(x: &'a FeatureMatrix, y: &'a [bool], c: f64) -> Self {
        let (wn, wp) = balanced_class_weights(y);
        Self::with_weights(x, y, y.iter().map(|&t| if t { wp } else { wn }).collect(), c)
    }

    pub fn with_weights(x: &'a FeatureMatrix, y: &'a [bool], sample_weights: Vec<f64>, c: f64) -> Self {
        Self {
            x,
            y,
            sample_weights,
            inv_c: 1.0 / c,
        }
    }

    pub fn n_params(&self) -> usize {
        self.x.dim() + 1
    }

    /// Objective value and gradient at `theta = [w..., b]`.
    pub fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let d = self.x.dim();
        let (w, b) = (&theta[..d], theta[d]);
        let n = self.y.len() as f64;
        let mut grad = vec![0.0; d + 1];
        let mut loss = 0.0;
        for i in 0..self.x.n_rows() {
            let z = self.x.dot(i, w) + b;
            let s = self.sample_weights[i];
            let (t, yv) = if self.y[i] { (1.0, 1.0) } else { (-1.0, 0.0) };
            loss += s * softplus(-t * z);
            let r = s * (sigmoid(z) - yv);
            for (c, v) in self.x.row(i).iter() {
                grad[c] += r * v;
            }
            grad[d] += r;
        }
        grad.iter_mut().for_each(|g| *g /= n);
        let mut penalty = 0.0;
        for (g, wj) in grad[..d].iter_mut().zip(w) {
            *g += wj * self.inv_c;
            penalty += wj * wj;
        }
        (loss / n + 0.5 * self.inv_c * penalty, grad)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes the objective with L-BFGS and a backtracking Armijo line
/// search. Every accepted step strictly decreases the objective.
pub fn minimize(
    objective: &LogisticObjective<'_>,
    tolerance: f64,
    max_iterations: usize,
) -> (Vec<f64>, OptimizerReport) {
    const MEMORY: usize = 10;
    let p = objective.n_params();
    let mut theta = vec![0.0; p];
    let (mut f, mut g) = objective.value_and_gradient(&theta);
    let mut history: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> =
        std::collections::VecDeque::with_capacity(MEMORY);
    let mut iterations = 0;

    while iterations < max_iterations && max_abs(&g) > tolerance {
        // Two-loop recursion for the search direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, yv, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map(|(s, yv, _)| dot(s, yv) / dot(yv, yv))
            .unwrap_or_else(|| 1.0 / max_abs(&g).max(1.0));
        q.iter_mut().for_each(|qi| *qi *= gamma);
        for ((s, yv, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let beta = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - beta) * si);
        }
        let mut direction: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &direction);
        if slope >= 0.0 {
            history.clear();
            direction = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = theta
                .iter()
                .zip(&direction)
                .map(|(t, d)| t + step * d)
                .collect();
            let (ft, gt) = objective.value_and_gradient(&trial);
            if ft <= f + 1e-4 * step * slope && ft.is_finite() {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((next, f_next, g_next)) = accepted else {
            break;
        };
        let s: Vec<f64> = next.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-300 {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, yv, 1.0 / sy));
        }
        let progressed = f_next < f;
        theta = next;
        f = f_next;
        g = g_next;
        iterations += 1;
        if !progressed && history.is_empty() {
            break;
        }
    }
    let gradient_max_norm = max_abs(&g);
    (
        theta,
        OptimizerReport {
            iterations,
            converged: gradient_max_norm <= tolerance,
            gradient_max_norm,
            objective: f,
        },
    )
}
