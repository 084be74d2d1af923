//! Sentence representations: 1–2-gram bag-of-words counts, averaged word
//! embeddings, and precomputed contextual sentence embeddings.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::FeaturesError;
use crate::text::nfc;

pub const DEFAULT_MAX_FEATURES: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    /// Drop punctuation instead of emitting it as one-character tokens.
    pub strip_punctuation: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
        }
    }
}

/// Tokens are maximal runs of letters and digits of the NFC text.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    let text = nfc(text);
    let text = if config.lowercase {
        text.to_lowercase()
    } else {
        text
    };
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            current.push(c);
            continue;
        }
        if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        if !config.strip_punctuation && !c.is_whitespace() {
            tokens.push(c.to_string());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn ngrams(tokens: &[String], range: (usize, usize)) -> impl Iterator<Item = String> + '_ {
    (range.0..=range.1).flat_map(move |n| tokens.windows(n.max(1)).map(|w| w.join(" ")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    /// n-gram → column; columns are dense and follow lexicographic order.
    pub entries: BTreeMap<String, usize>,
    pub ngram_range: (usize, usize),
    pub max_features: Option<usize>,
    pub tokenizer: TokenizerConfig,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Stable content hash used as the feature-space descriptor of models.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{:?}{:?}", self.ngram_range, self.tokenizer).as_bytes());
        for (gram, col) in &self.entries {
            h.update(gram.as_bytes());
            h.update([0u8]);
            h.update((*col as u64).to_le_bytes());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds the n-gram vocabulary of the training texts. With a cap, the most
/// frequent n-grams are kept, ties broken lexicographically.
pub fn fit_vocabulary<S: AsRef<str>>(
    train: &[S],
    ngram_range: (usize, usize),
    max_features: Option<usize>,
    tokenizer: &TokenizerConfig,
) -> Result<Vocabulary, FeaturesError> {
    if train.is_empty() {
        return Err(FeaturesError::EmptyTrainingSet);
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in train {
        let tokens = tokenize(text.as_ref(), tokenizer);
        for g in ngrams(&tokens, ngram_range) {
            *counts.entry(g).or_default() += 1;
        }
    }
    let mut kept: Vec<(String, usize)> = counts.into_iter().collect();
    if let Some(cap) = max_features {
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        kept.truncate(cap);
    }
    let mut grams: Vec<String> = kept.into_iter().map(|(g, _)| g).collect();
    grams.sort();
    Ok(Vocabulary {
        entries: grams.into_iter().enumerate().map(|(i, g)| (g, i)).collect(),
        ngram_range,
        max_features,
        tokenizer: *tokenizer,
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    /// Strictly increasing column indices.
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, column: usize) -> f64 {
        match self.indices.binary_search(&column) {
            Ok(i) => self.values[i],
            Err(_) => 0.0,
        }
    }
}

pub fn transform_bow(text: &str, vocabulary: &Vocabulary) -> SparseVector {
    let tokens = tokenize(text, &vocabulary.tokenizer);
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for g in ngrams(&tokens, vocabulary.ngram_range) {
        if let Some(&col) = vocabulary.entries.get(&g) {
            *counts.entry(col).or_default() += 1.0;
        }
    }
    SparseVector {
        indices: counts.keys().copied().collect(),
        values: counts.values().copied().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dimension: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadWarning {
    pub line: usize,
    pub message: String,
}

/// Parses the word-vector text format: a `<count> <dimension>` header, then
/// `<token> v1 … v_dim` per line. Duplicate tokens keep the last occurrence.
pub fn parse_embeddings(
    reader: impl BufRead,
    origin: &str,
) -> Result<(EmbeddingTable, Vec<LoadWarning>), FeaturesError> {
    let err = |line: usize, message: String| FeaturesError::Format {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            None => return Err(err(1, "missing `<count> <dimension>` header".into())),
            Some((i, l)) => {
                let l = l.map_err(|e| err(i + 1, e.to_string()))?;
                if !l.trim().is_empty() {
                    break (i + 1, l);
                }
            }
        }
    };
    let parts: Vec<&str> = header.1.split_whitespace().collect();
    let (count, dimension) = match parts.as_slice() {
        [c, d] => (
            c.parse::<usize>().map_err(|e| err(header.0, format!("bad count: {e}")))?,
            d.parse::<usize>().map_err(|e| err(header.0, format!("bad dimension: {e}")))?,
        ),
        _ => return Err(err(header.0, "header must be `<count> <dimension>`".into())),
    };
    if dimension == 0 {
        return Err(err(header.0, "dimension must be positive".into()));
    }

    let mut vectors: HashMap<String, Vec<f64>> = HashMap::with_capacity(count);
    let mut warnings = Vec::new();
    let mut rows = 0usize;
    for (i, l) in lines {
        let line_no = i + 1;
        let l = l.map_err(|e| err(line_no, e.to_string()))?;
        let mut fields = l.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values = fields
            .map(|v| v.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| err(line_no, format!("bad value: {e}")))?;
        if values.len() != dimension {
            return Err(err(
                line_no,
                format!("expected {dimension} values, found {}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(err(line_no, "non-finite value".into()));
        }
        rows += 1;
        let token = nfc(token);
        if vectors.insert(token.clone(), values).is_some() {
            let message = format!("duplicate token `{token}`, keeping the last occurrence");
            log::warn!("{origin}: line {line_no}: {message}");
            warnings.push(LoadWarning {
                line: line_no,
                message,
            });
        }
    }
    if rows != count {
        let message = format!("header announces {count} vectors, file has {rows}");
        log::warn!("{origin}: {message}");
        warnings.push(LoadWarning {
            line: header.0,
            message,
        });
    }
    Ok((EmbeddingTable { dimension, vectors }, warnings))
}

pub fn load_embeddings(path: &Path) -> Result<(EmbeddingTable, Vec<LoadWarning>), FeaturesError> {
    let file = File::open(path).map_err(|source| FeaturesError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_embeddings(BufReader::new(file), &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragedEmbedding {
    pub vector: Vec<f64>,
    pub known_tokens: usize,
    /// Set when no token of the sentence is in the table.
    pub all_oov: bool,
}

/// Mean of the vectors of in-vocabulary tokens; out-of-vocabulary tokens are
/// skipped and an all-OOV sentence maps to the zero vector.
pub fn embed_average(
    text: &str,
    table: &EmbeddingTable,
    tokenizer: &TokenizerConfig,
) -> AveragedEmbedding {
    let mut sum = vec![0.0; table.dimension];
    let mut known = 0usize;
    for token in tokenize(text, tokenizer) {
        if let Some(v) = table.vectors.get(&token) {
            for (s, x) in sum.iter_mut().zip(v) {
                *s += x;
            }
            known += 1;
        }
    }
    if known > 0 {
        let k = known as f64;
        sum.iter_mut().for_each(|s| *s /= k);
    }
    AveragedEmbedding {
        vector: sum,
        known_tokens: known,
        all_oov: known == 0,
    }
}

/// Sentence vectors produced outside this crate (e.g. by a transformer
/// feature extractor), keyed by sentence id.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextualEmbeddingSource {
    pub dimension: usize,
    pub provenance: String,
    pub vectors: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct ContextualHeader {
    dimension: usize,
    #[serde(default)]
    provenance: Option<String>,
}

#[derive(Deserialize)]
struct ContextualRecord {
    sentence_id: String,
    vector: Vec<f64>,
}

impl ContextualEmbeddingSource {
    /// JSONL: a `{dimension, provenance?}` header record, then
    /// `{sentence_id, vector}` records.
    pub fn parse(reader: impl BufRead, origin: &str) -> Result<Self, FeaturesError> {
        let err = |line: usize, message: String| FeaturesError::Format {
            path: origin.to_string(),
            line,
            message,
        };
        let mut header: Option<ContextualHeader> = None;
        let mut vectors = HashMap::new();
        for (i, l) in reader.lines().enumerate() {
            let line_no = i + 1;
            let l = l.map_err(|e| err(line_no, e.to_string()))?;
            if l.trim().is_empty() {
                continue;
            }
            match &header {
                None => {
                    header = Some(
                        serde_json::from_str(&l)
                            .map_err(|e| err(line_no, format!("bad header record: {e}")))?,
                    );
                }
                Some(h) => {
                    let rec: ContextualRecord =
                        serde_json::from_str(&l).map_err(|e| err(line_no, e.to_string()))?;
                    if rec.vector.len() != h.dimension {
                        return Err(err(
                            line_no,
                            format!(
                                "vector for `{}` has {} values, expected {}",
                                rec.sentence_id,
                                rec.vector.len(),
                                h.dimension
                            ),
                        ));
                    }
                    vectors.insert(rec.sentence_id, rec.vector);
                }
            }
        }
        let header = header.ok_or_else(|| err(1, "missing `{dimension}` header record".into()))?;
        Ok(Self {
            dimension: header.dimension,
            provenance: header.provenance.unwrap_or_else(|| "external".into()),
            vectors,
        })
    }

    pub fn load(path: &Path) -> Result<Self, FeaturesError> {
        let file = File::open(path).map_err(|source| FeaturesError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(BufReader::new(file), &path.display().to_string())
    }
}

pub fn lookup_contextual<'a>(
    sentence_id: &str,
    source: &'a ContextualEmbeddingSource,
) -> Result<&'a [f64], FeaturesError> {
    source
        .vectors
        .get(sentence_id)
        .map(Vec::as_slice)
        .ok_or_else(|| FeaturesError::Miss(sentence_id.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(texts: &[&str], cap: Option<usize>) -> Vocabulary {
        fit_vocabulary(texts, (1, 2), cap, &TokenizerConfig::default()).unwrap()
    }

    #[test]
    fn tokenize_examples() {
        let cfg = TokenizerConfig::default();
        assert_eq!(tokenize("Wij zoeken een man.", &cfg), ["wij", "zoeken", "een", "man"]);
        assert!(tokenize("", &cfg).is_empty());
        assert_eq!(tokenize("m/v", &cfg), ["m", "v"]);
        let keep = TokenizerConfig {
            lowercase: false,
            strip_punctuation: false,
        };
        assert_eq!(tokenize("Man, m/v", &keep), ["Man", ",", "m", "/", "v"]);
    }

    #[test]
    fn vocabulary_unigrams_and_bigrams() {
        let v = vocab(&["a b", "b c"], None);
        let keys: Vec<_> = v.entries.keys().cloned().collect();
        assert_eq!(keys, ["a", "a b", "b", "b c", "c"]);
        assert_eq!(v.entries.values().copied().collect::<Vec<_>>(), [0, 1, 2, 3, 4]);
        assert_eq!(v, vocab(&["a b", "b c"], None));
    }

    #[test]
    fn vocabulary_cap_prefers_frequency_then_lexicographic() {
        // Counts: b=2; a, "a b", "b c", c = 1. Ties resolved "a" < "a b" < "b c" < "c".
        let v = vocab(&["a b", "b c"], Some(3));
        let keys: Vec<_> = v.entries.keys().cloned().collect();
        assert_eq!(keys, ["a", "a b", "b"]);
    }

    #[test]
    fn empty_training_set_fails() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            fit_vocabulary(&empty, (1, 2), None, &TokenizerConfig::default()),
            Err(FeaturesError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn bow_counts() {
        let v = vocab(&["a b", "b c"], None);
        let x = transform_bow("b b c", &v);
        // b:2, "b b" unseen, "b c":1, c:1
        let col = |g: &str| v.entries[g];
        assert_eq!(x.get(col("b")), 2.0);
        assert_eq!(x.get(col("c")), 1.0);
        assert_eq!(x.get(col("b c")), 1.0);
        assert_eq!(x.nnz(), 3);
        assert!(x.indices.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(transform_bow("x y z", &v).nnz(), 0);
    }

    #[test]
    fn embeddings_parse_and_validate() {
        let (t, w) = parse_embeddings("2 3\na 1 0 0\nb 0 1 0\n".as_bytes(), "mem").unwrap();
        assert_eq!(t.vectors.len(), 2);
        assert!(w.is_empty());

        let e = parse_embeddings("2 3\na 1 0 0\nb 0 1\n".as_bytes(), "mem").unwrap_err();
        assert!(matches!(e, FeaturesError::Format { line: 3, .. }), "{e}");

        let (t, w) = parse_embeddings("2 2\na 1 0\na 0 1\n".as_bytes(), "mem").unwrap();
        assert_eq!(t.vectors["a"], vec![0.0, 1.0]);
        assert!(w.iter().any(|w| w.message.contains("duplicate")));
    }

    #[test]
    fn averaging() {
        let (t, _) = parse_embeddings("2 2\na 1 0\nb 0 1\n".as_bytes(), "mem").unwrap();
        let cfg = TokenizerConfig::default();
        assert_eq!(embed_average("a b", &t, &cfg).vector, vec![0.5, 0.5]);
        assert_eq!(embed_average("a zzz", &t, &cfg).vector, vec![1.0, 0.0]);
        let oov = embed_average("zzz", &t, &cfg);
        assert!(oov.all_oov);
        assert_eq!(oov.vector, vec![0.0, 0.0]);
    }

    #[test]
    fn contextual_lookup() {
        let data = "{\"dimension\":2,\"provenance\":\"bertje-cls\"}\n{\"sentence_id\":\"s1\",\"vector\":[0.1,0.2]}\n";
        let src = ContextualEmbeddingSource::parse(data.as_bytes(), "mem").unwrap();
        assert_eq!(lookup_contextual("s1", &src).unwrap(), &[0.1, 0.2]);
        assert!(matches!(lookup_contextual("s2", &src), Err(FeaturesError::Miss(_))));
        assert!(src.vectors.values().all(|v| v.len() == src.dimension));

        let bad = "{\"dimension\":3}\n{\"sentence_id\":\"s1\",\"vector\":[0.1]}\n";
        assert!(ContextualEmbeddingSource::parse(bad.as_bytes(), "mem").is_err());
    }
}
