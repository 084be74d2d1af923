//! Feature extraction fitted on a training set, bundled with a classifier
//! family into a method that evaluation can train and score end to end.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{self, ClassifierParams, FeatureSpace, Score, TrainedModel};
use crate::error::{EvaluateError, FeaturesError};
use crate::features::{
    embed_average, fit_vocabulary, hex, load_embeddings, lookup_contextual, transform_bow,
    ContextualEmbeddingSource, EmbeddingTable, TokenizerConfig, Vocabulary, DEFAULT_MAX_FEATURES,
};
use crate::matrix::FeatureMatrix;

/// A sentence as seen by the feature extractors.
#[derive(Debug, Clone, Copy)]
pub struct Item<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BowConfig {
    pub ngram_range: (usize, usize),
    pub max_features: Option<usize>,
    #[serde(default)]
    pub tokenizer: TokenizerConfig,
}

impl Default for BowConfig {
    fn default() -> Self {
        Self {
            ngram_range: (1, 2),
            max_features: Some(DEFAULT_MAX_FEATURES),
            tokenizer: TokenizerConfig::default(),
        }
    }
}

/// How sentences become vectors. Tables are shared, never copied.
#[derive(Debug, Clone)]
pub enum FeatureMethod {
    Bow(BowConfig),
    Average {
        table: Arc<EmbeddingTable>,
        tokenizer: TokenizerConfig,
    },
    Contextual(Arc<ContextualEmbeddingSource>),
}

impl FeatureMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Bow(_) => "bow",
            Self::Average { .. } => "average",
            Self::Contextual(_) => "contextual",
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Bow(c) => format!(
                "bow(ngram={}-{},max_features={})",
                c.ngram_range.0,
                c.ngram_range.1,
                c.max_features.map_or("none".into(), |m| m.to_string())
            ),
            Self::Average { table, .. } => {
                format!("average(dim={},table={})", table.dimension, &table_fingerprint(table)[..12])
            }
            Self::Contextual(s) => format!("contextual(dim={},{})", s.dimension, s.provenance),
        }
    }
}

/// Content hash of an embedding table, independent of load order.
pub fn table_fingerprint(table: &EmbeddingTable) -> String {
    let mut keys: Vec<&String> = table.vectors.keys().collect();
    keys.sort();
    let mut h = Sha256::new();
    h.update((table.dimension as u64).to_le_bytes());
    for k in keys {
        h.update(k.as_bytes());
        h.update([0]);
        for x in &table.vectors[k] {
            h.update(x.to_bits().to_le_bytes());
        }
    }
    hex(&h.finalize())
}

/// A feature extractor fitted on training sentences.
#[derive(Debug, Clone)]
pub enum Featurizer {
    Bow(Vocabulary),
    Average {
        table: Arc<EmbeddingTable>,
        tokenizer: TokenizerConfig,
        fingerprint: String,
    },
    Contextual(Arc<ContextualEmbeddingSource>),
}

impl Featurizer {
    /// Only the bag-of-words vocabulary depends on the training texts.
    pub fn fit(method: &FeatureMethod, train: &[Item<'_>]) -> Result<Self, EvaluateError> {
        Ok(match method {
            FeatureMethod::Bow(c) => {
                let texts: Vec<&str> = train.iter().map(|i| i.text).collect();
                Self::Bow(fit_vocabulary(&texts, c.ngram_range, c.max_features, &c.tokenizer)?)
            }
            FeatureMethod::Average { table, tokenizer } => Self::Average {
                fingerprint: table_fingerprint(table),
                table: Arc::clone(table),
                tokenizer: *tokenizer,
            },
            FeatureMethod::Contextual(s) => Self::Contextual(Arc::clone(s)),
        })
    }

    pub fn transform(&self, items: &[Item<'_>]) -> Result<FeatureMatrix, EvaluateError> {
        Ok(match self {
            Self::Bow(v) => FeatureMatrix::from_sparse(
                items.iter().map(|i| transform_bow(i.text, v)).collect(),
                v.len(),
            )?,
            Self::Average {
                table, tokenizer, ..
            } => {
                let rows: Vec<Vec<f64>> = items
                    .iter()
                    .map(|i| embed_average(i.text, table, tokenizer).vector)
                    .collect();
                FeatureMatrix::from_dense(&rows, table.dimension)?
            }
            Self::Contextual(s) => {
                let rows = items
                    .iter()
                    .map(|i| lookup_contextual(i.id, s).map(<[f64]>::to_vec))
                    .collect::<Result<Vec<_>, _>>()?;
                FeatureMatrix::from_dense(&rows, s.dimension)?
            }
        })
    }

    pub fn space(&self) -> FeatureSpace {
        match self {
            Self::Bow(v) => FeatureSpace {
                kind: "bow".into(),
                dimension: v.len(),
                fingerprint: v.fingerprint(),
            },
            Self::Average {
                table, fingerprint, ..
            } => FeatureSpace {
                kind: "average".into(),
                dimension: table.dimension,
                fingerprint: fingerprint.clone(),
            },
            Self::Contextual(s) => FeatureSpace {
                kind: "contextual".into(),
                dimension: s.dimension,
                fingerprint: s.provenance.clone(),
            },
        }
    }
}

/// Features plus classifier: everything needed to go from texts to scores.
#[derive(Debug, Clone)]
pub struct MethodSpec {
    pub name: String,
    pub features: FeatureMethod,
    pub classifier: ClassifierParams,
}

impl MethodSpec {
    pub fn new(features: FeatureMethod, classifier: ClassifierParams) -> Self {
        let name = format!("{}+{}", features.name(), kind_name(&classifier));
        Self {
            name,
            features,
            classifier,
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "{} {} {}",
            self.name,
            self.features.describe(),
            serde_json::to_string(&self.classifier).expect("params serialize")
        )
    }
}

pub(crate) fn kind_name(p: &ClassifierParams) -> &'static str {
    match p {
        ClassifierParams::Logistic(_) => "logistic",
        ClassifierParams::Gbt(_) => "gbt",
        ClassifierParams::Forest(_) => "forest",
    }
}

/// A featurizer and the model trained in its space.
#[derive(Debug, Clone)]
pub struct FittedMethod {
    pub featurizer: Featurizer,
    pub model: TrainedModel,
}

impl FittedMethod {
    pub fn fit(
        features: &FeatureMethod,
        classifier: &ClassifierParams,
        train: &[Item<'_>],
        labels: &[bool],
        seed: u64,
    ) -> Result<Self, EvaluateError> {
        let featurizer = Featurizer::fit(features, train)?;
        let x = featurizer.transform(train)?;
        let model = classify::train(classifier, &x, labels, seed, featurizer.space())?;
        Ok(Self { featurizer, model })
    }

    pub fn score(&self, items: &[Item<'_>]) -> Result<Vec<Score>, EvaluateError> {
        let x = self.featurizer.transform(items)?;
        Ok(classify::predict_in_space(&self.model, &x, &self.featurizer.space())?)
    }
}

/// On-disk form of a fitted featurizer. Embedding tables are referenced by
/// path and checked against the recorded fingerprint when loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeaturizerArtifact {
    Bow {
        vocabulary: Vocabulary,
    },
    Average {
        embeddings: PathBuf,
        tokenizer: TokenizerConfig,
        fingerprint: String,
    },
    Contextual {
        embeddings: PathBuf,
        provenance: String,
    },
}

impl FeaturizerArtifact {
    /// `embeddings` is required for the embedding featurizers.
    pub fn of(featurizer: &Featurizer, embeddings: Option<&Path>) -> Result<Self, FeaturesError> {
        let path = || {
            embeddings
                .map(Path::to_path_buf)
                .ok_or_else(|| FeaturesError::Artifact("embedding path required".into()))
        };
        Ok(match featurizer {
            Featurizer::Bow(v) => Self::Bow {
                vocabulary: v.clone(),
            },
            Featurizer::Average {
                tokenizer,
                fingerprint,
                ..
            } => Self::Average {
                embeddings: path()?,
                tokenizer: *tokenizer,
                fingerprint: fingerprint.clone(),
            },
            Featurizer::Contextual(s) => Self::Contextual {
                embeddings: path()?,
                provenance: s.provenance.clone(),
            },
        })
    }

    pub fn restore(&self) -> Result<Featurizer, FeaturesError> {
        Ok(match self {
            Self::Bow { vocabulary } => Featurizer::Bow(vocabulary.clone()),
            Self::Average {
                embeddings,
                tokenizer,
                fingerprint,
            } => {
                let (table, _) = load_embeddings(embeddings)?;
                let found = table_fingerprint(&table);
                if &found != fingerprint {
                    return Err(FeaturesError::Artifact(format!(
                        "{} has fingerprint {found}, expected {fingerprint}",
                        embeddings.display()
                    )));
                }
                Featurizer::Average {
                    table: Arc::new(table),
                    tokenizer: *tokenizer,
                    fingerprint: found,
                }
            }
            Self::Contextual {
                embeddings,
                provenance,
            } => {
                let source = ContextualEmbeddingSource::load(embeddings)?;
                if &source.provenance != provenance {
                    return Err(FeaturesError::Artifact(format!(
                        "{} has provenance {}, expected {provenance}",
                        embeddings.display(),
                        source.provenance
                    )));
                }
                Featurizer::Contextual(Arc::new(source))
            }
        })
    }
}

/// A trained method as saved by `train` and read back by `evaluate`,
/// `discover` and the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub featurizer: FeaturizerArtifact,
    pub model: TrainedModel,
}

impl ModelBundle {
    pub fn of(fitted: &FittedMethod, embeddings: Option<&Path>) -> Result<Self, FeaturesError> {
        Ok(Self {
            featurizer: FeaturizerArtifact::of(&fitted.featurizer, embeddings)?,
            model: fitted.model.clone(),
        })
    }

    pub fn restore(&self) -> Result<FittedMethod, FeaturesError> {
        Ok(FittedMethod {
            featurizer: self.featurizer.restore()?,
            model: self.model.clone(),
        })
    }
}
