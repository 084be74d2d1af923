//! Binary classifiers producing scores in `[0, 1]`.

pub mod forest;
pub mod gbt;
pub mod logistic;
pub mod tree;

use serde::{Deserialize, Serialize};

use crate::error::ClassifyError;
use crate::matrix::FeatureMatrix;

pub use forest::{ForestModel, ForestParams};
pub use gbt::{GbtModel, GbtParams};
pub use logistic::{LogisticParams, OptimizerReport};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Score(f64);

impl Score {
    pub fn new(probability: f64) -> Self {
        Self(probability.clamp(0.0, 1.0))
    }

    pub fn probability(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Logistic,
    Gbt,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierParams {
    Logistic(LogisticParams),
    Gbt(GbtParams),
    Forest(ForestParams),
}

impl ClassifierParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Logistic(_) => ModelKind::Logistic,
            Self::Gbt(_) => ModelKind::Gbt,
            Self::Forest(_) => ModelKind::Forest,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |m: &str| Err(ClassifyError::Hyperparameter(m.to_string()));
        match self {
            Self::Logistic(p) => {
                if !(p.c > 0.0 && p.c.is_finite()) {
                    return bad("C must be positive");
                }
                if !(p.tolerance > 0.0) {
                    return bad("tolerance must be positive");
                }
            }
            Self::Gbt(p) => {
                if !(p.learning_rate > 0.0) || !(p.min_child_weight >= 0.0) || p.max_depth == 0 {
                    return bad("learning_rate and max_depth must be positive, min_child_weight non-negative");
                }
                if !(p.scale_pos_weight > 0.0) || !(p.lambda >= 0.0) {
                    return bad("scale_pos_weight must be positive and lambda non-negative");
                }
            }
            Self::Forest(p) => {
                if p.n_estimators == 0 || p.max_depth == 0 || p.min_samples_split < 2 {
                    return bad("n_estimators and max_depth must be positive, min_samples_split >= 2");
                }
            }
        }
        Ok(())
    }
}

/// Hyperparameter surfaces searched for each classifier family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperparameterGrid {
    pub logistic: LogisticGrid,
    pub gbt: GbtGrid,
    pub forest: ForestGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticGrid {
    #[serde(rename = "C")]
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtGrid {
    pub min_child_weight: Vec<f64>,
    pub learning_rate: Vec<f64>,
    pub max_depth: Vec<usize>,
    pub scale_pos_weight: f64,
    #[serde(default = "default_rounds")]
    pub n_rounds: usize,
}

fn default_rounds() -> usize {
    gbt::DEFAULT_ROUNDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestGrid {
    pub max_depth: Vec<usize>,
    pub n_estimators: Vec<usize>,
    pub min_samples_split: Vec<usize>,
}

impl Default for HyperparameterGrid {
    /// The published search space; class weights are always balanced for
    /// the logistic model and the forest.
    fn default() -> Self {
        Self {
            logistic: LogisticGrid {
                c: vec![0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0],
            },
            gbt: GbtGrid {
                min_child_weight: vec![2.0, 5.0, 10.0],
                learning_rate: vec![0.3, 0.2, 0.1, 0.05, 0.01, 0.005],
                max_depth: vec![10, 50, 100],
                scale_pos_weight: 2.5,
                n_rounds: gbt::DEFAULT_ROUNDS,
            },
            forest: ForestGrid {
                max_depth: vec![10, 50, 100],
                n_estimators: vec![200, 600, 1000, 1400, 2000],
                min_samples_split: vec![2, 5, 10, 50],
            },
        }
    }
}

impl HyperparameterGrid {
    /// Grid points of one family in canonical order: nested loops over the
    /// fields in declaration order, each list in its given order.
    pub fn points(&self, kind: ModelKind) -> Vec<ClassifierParams> {
        match kind {
            ModelKind::Logistic => self
                .logistic
                .c
                .iter()
                .map(|&c| ClassifierParams::Logistic(LogisticParams::with_c(c)))
                .collect(),
            ModelKind::Gbt => {
                let g = &self.gbt;
                let mut out = Vec::new();
                for &mcw in &g.min_child_weight {
                    for &lr in &g.learning_rate {
                        for &depth in &g.max_depth {
                            out.push(ClassifierParams::Gbt(GbtParams {
                                min_child_weight: mcw,
                                learning_rate: lr,
                                max_depth: depth,
                                scale_pos_weight: g.scale_pos_weight,
                                n_rounds: g.n_rounds,
                                ..GbtParams::default()
                            }));
                        }
                    }
                }
                out
            }
            ModelKind::Forest => {
                let g = &self.forest;
                let mut out = Vec::new();
                for &depth in &g.max_depth {
                    for &n in &g.n_estimators {
                        for &mss in &g.min_samples_split {
                            out.push(ClassifierParams::Forest(ForestParams {
                                max_depth: depth,
                                n_estimators: n,
                                min_samples_split: mss,
                            }));
                        }
                    }
                }
                out
            }
        }
    }
}

/// Identifies the representation a model was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpace {
    /// `bow`, `average` or `contextual`.
    pub kind: String,
    pub dimension: usize,
    /// Vocabulary hash for bag-of-words, embedding provenance otherwise.
    pub fingerprint: String,
}

impl std::fmt::Display for FeatureSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.kind, self.dimension, self.fingerprint)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelParameters {
    Logistic { weights: Vec<f64>, bias: f64 },
    Gbt(GbtModel),
    Forest(ForestModel),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerReport>,
    /// Training loss before the first and after every boosting round.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub hyperparameters: ClassifierParams,
    pub seed: u64,
    pub feature_space: FeatureSpace,
    pub parameters: ModelParameters,
    pub training: TrainingSummary,
}

fn check_training_set(x: &FeatureMatrix, y: &[bool]) -> Result<(), ClassifyError> {
    if x.n_rows() == 0 || x.n_rows() != y.len() {
        return Err(ClassifyError::Shape {
            rows: x.n_rows(),
            labels: y.len(),
        });
    }
    let pos = y.iter().filter(|&&t| t).count();
    if pos == 0 || pos == y.len() {
        return Err(ClassifyError::SingleClass);
    }
    Ok(())
}

pub fn train_logistic(
    x: &FeatureMatrix,
    y: &[bool],
    params: &LogisticParams,
    seed: u64,
    feature_space: FeatureSpace,
) -> Result<TrainedModel, ClassifyError> {
    check_training_set(x, y)?;
    ClassifierParams::Logistic(*params).validate()?;
    let objective = logistic::LogisticObjective::new(x, y, params.c);
    let (theta, report) = logistic::minimize(&objective, params.tolerance, params.max_iterations);
    if !report.converged {
        log::warn!(
            "logistic: stopped after {} iterations with gradient max-norm {:.3e} (tolerance {:.1e})",
            report.iterations,
            report.gradient_max_norm,
            params.tolerance
        );
    }
    let d = x.dim();
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::Logistic,
        hyperparameters: ClassifierParams::Logistic(*params),
        seed,
        feature_space,
        parameters: ModelParameters::Logistic {
            weights: theta[..d].to_vec(),
            bias: theta[d],
        },
        training: TrainingSummary {
            optimizer: Some(report),
            loss_history: Vec::new(),
        },
    })
}

pub fn train_gbt(
    x: &FeatureMatrix,
    y: &[bool],
    params: &GbtParams,
    seed: u64,
    feature_space: FeatureSpace,
) -> Result<TrainedModel, ClassifyError> {
    check_training_set(x, y)?;
    ClassifierParams::Gbt(*params).validate()?;
    let (model, history) = gbt::fit(x, y, params);
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::Gbt,
        hyperparameters: ClassifierParams::Gbt(*params),
        seed,
        feature_space,
        parameters: ModelParameters::Gbt(model),
        training: TrainingSummary {
            optimizer: None,
            loss_history: history,
        },
    })
}

pub fn train_forest(
    x: &FeatureMatrix,
    y: &[bool],
    params: &ForestParams,
    seed: u64,
    feature_space: FeatureSpace,
) -> Result<TrainedModel, ClassifyError> {
    check_training_set(x, y)?;
    ClassifierParams::Forest(*params).validate()?;
    let model = forest::fit(x, y, params, seed);
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::Forest,
        hyperparameters: ClassifierParams::Forest(*params),
        seed,
        feature_space,
        parameters: ModelParameters::Forest(model),
        training: TrainingSummary::default(),
    })
}

pub fn train(
    params: &ClassifierParams,
    x: &FeatureMatrix,
    y: &[bool],
    seed: u64,
    feature_space: FeatureSpace,
) -> Result<TrainedModel, ClassifyError> {
    match params {
        ClassifierParams::Logistic(p) => train_logistic(x, y, p, seed, feature_space),
        ClassifierParams::Gbt(p) => train_gbt(x, y, p, seed, feature_space),
        ClassifierParams::Forest(p) => train_forest(x, y, p, seed, feature_space),
    }
}

impl TrainedModel {
    fn score_row(&self, row: &crate::features::SparseVector) -> f64 {
        match &self.parameters {
            ModelParameters::Logistic { weights, bias } => {
                logistic::sigmoid(row.iter().map(|(c, v)| weights[c] * v).sum::<f64>() + bias)
            }
            ModelParameters::Gbt(m) => logistic::sigmoid(m.margin(row)),
            ModelParameters::Forest(m) => m.score(row),
        }
    }

    pub fn to_json(&self) -> Result<String, ClassifyError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str) -> Result<Self, ClassifyError> {
        let model: Self = serde_json::from_str(json)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(ClassifyError::Version(model.format_version));
        }
        Ok(model)
    }
}

/// Scores every row; rejects matrices of the wrong dimension.
pub fn predict(model: &TrainedModel, x: &FeatureMatrix) -> Result<Vec<Score>, ClassifyError> {
    if x.dim() != model.feature_space.dimension {
        return Err(ClassifyError::DimensionMismatch {
            expected: model.feature_space.dimension,
            found: x.dim(),
        });
    }
    Ok(x.rows().iter().map(|r| Score::new(model.score_row(r))).collect())
}

/// As [`predict`], but also requires the feature-space descriptor to match.
pub fn predict_in_space(
    model: &TrainedModel,
    x: &FeatureMatrix,
    space: &FeatureSpace,
) -> Result<Vec<Score>, ClassifyError> {
    if *space != model.feature_space {
        return Err(ClassifyError::FeatureSpaceMismatch {
            expected: model.feature_space.to_string(),
            found: space.to_string(),
        });
    }
    predict(model, x)
}

pub fn probabilities(scores: &[Score]) -> Vec<f64> {
    scores.iter().map(|s| s.probability()).collect()
}
