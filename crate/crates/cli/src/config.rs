//! TOML configuration. Every field is optional; command-line flags take
//! precedence over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vacscreen_core::classify::{ClassifierParams, HyperparameterGrid, LogisticParams, ModelKind};
use vacscreen_core::evaluate::{Metric, DEFAULT_TEST_FRACTION};
use vacscreen_core::features::{load_embeddings, ContextualEmbeddingSource, TokenizerConfig};
use vacscreen_core::pipeline::{BowConfig, FeatureMethod, MethodSpec};
use vacscreen_core::terms::TermCatalog;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub catalog: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub test_fraction: Option<f64>,
    pub features: FeatureConfig,
    pub classifier: Option<ClassifierParams>,
    pub grid: HyperparameterGrid,
    pub metric: Option<Metric>,
    pub annotate: AnnotateConfig,
    pub serve: ServeConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    #[default]
    Bow,
    Average,
    Contextual,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub method: FeatureKind,
    pub ngram_range: Option<(usize, usize)>,
    /// `0` keeps every n-gram.
    pub max_features: Option<usize>,
    pub tokenizer: Option<TokenizerConfig>,
    pub embeddings: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotateConfig {
    pub roster: Vec<String>,
    pub overlap: Option<usize>,
    pub plan: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Annotator,
    Reviewer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenEntry {
    pub user: String,
    pub role: Role,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: Option<String>,
    pub data_dir: Option<PathBuf>,
    /// Bearer token → identity.
    pub tokens: BTreeMap<String, TokenEntry>,
    pub compact_every: Option<usize>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("config: cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("config: {}", path.display()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn test_fraction(&self) -> f64 {
        self.test_fraction.unwrap_or(DEFAULT_TEST_FRACTION)
    }

    pub fn catalog(&self) -> Result<TermCatalog> {
        Ok(match &self.catalog {
            Some(p) => TermCatalog::load(p)?,
            None => TermCatalog::default_dutch(),
        })
    }

    pub fn classifier(&self) -> ClassifierParams {
        self.classifier
            .unwrap_or(ClassifierParams::Logistic(LogisticParams::default()))
    }

    pub fn bow(&self) -> BowConfig {
        let d = BowConfig::default();
        BowConfig {
            ngram_range: self.features.ngram_range.unwrap_or(d.ngram_range),
            max_features: match self.features.max_features {
                Some(0) => None,
                Some(m) => Some(m),
                None => d.max_features,
            },
            tokenizer: self.features.tokenizer.unwrap_or(d.tokenizer),
        }
    }

    /// Loads embedding files as needed.
    pub fn feature_method(&self) -> Result<FeatureMethod> {
        let path = || {
            self.features
                .embeddings
                .as_deref()
                .context("config: features.embeddings is required for this method")
        };
        Ok(match self.features.method {
            FeatureKind::Bow => FeatureMethod::Bow(self.bow()),
            FeatureKind::Average => {
                let (table, warnings) = load_embeddings(path()?)?;
                for w in warnings {
                    log::warn!("embeddings line {}: {}", w.line, w.message);
                }
                FeatureMethod::Average {
                    table: Arc::new(table),
                    tokenizer: self.features.tokenizer.unwrap_or_default(),
                }
            }
            FeatureKind::Contextual => {
                FeatureMethod::Contextual(Arc::new(ContextualEmbeddingSource::load(path()?)?))
            }
        })
    }

    pub fn method(&self) -> Result<MethodSpec> {
        Ok(MethodSpec::new(self.feature_method()?, self.classifier()))
    }

    pub fn grid_points(&self, kind: ModelKind) -> Result<Vec<ClassifierParams>> {
        let points = self.grid.points(kind);
        if points.is_empty() {
            bail!("config: the {kind:?} grid is empty");
        }
        Ok(points)
    }
}
