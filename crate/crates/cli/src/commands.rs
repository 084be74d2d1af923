//! Subcommands. Each reads its inputs, runs one pipeline step and writes
//! deterministic outputs: pretty JSON without timestamps, JSONL, or CSV.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use vacscreen_core::annotate::{
    fleiss_kappa, overlap_records, plan_assignment, pool_labels, read_annotations,
    AssignmentPlan, LabeledDataset,
};
use vacscreen_core::classify::{self, ClassifierParams, LogisticParams, ModelKind};
use vacscreen_core::corpus::{
    generate_synthetic, ingest, is_annotatable, read_sentences, segment_sentences,
    write_sentences, InputFormat, Sentence, SyntheticSpec,
};
use vacscreen_core::evaluate::{
    discover_unknown, evaluate_scores, grid_search, learning_curve,
    leave_one_term_out, log_fractions, stratified_split, write_learning_curve_csv,
    write_pr_curve_csv, Metric, Provenance, SplitSpec, DEFAULT_DISCOVERY_K, GRID_SEARCH_FOLDS,
    LEARNING_CURVE_FOLDS, LEARNING_CURVE_MIN_FRACTION, LEARNING_CURVE_POINTS,
};
use vacscreen_core::pipeline::{
    Featurizer, FeaturizerArtifact, FittedMethod, Item, MethodSpec, ModelBundle,
};
use vacscreen_core::terms::{scan_sentence, term_group};

use crate::config::Config;

#[derive(Debug, Parser)]
#[command(name = "vacscreen", version, about = "Screen Dutch job vacancies for gender-discriminatory language")]
pub struct Cli {
    /// TOML configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Term catalog JSON; the built-in Dutch catalog by default.
    #[arg(long, global = true)]
    pub catalog: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split vacancies into sentences.
    Segment(SegmentArgs),
    /// Generate a labelled synthetic corpus.
    Synth(SynthArgs),
    /// Match catalog terms in every sentence.
    Scan(ScanArgs),
    /// Distribute flagged sentences over the annotators.
    Assign(AssignArgs),
    /// Fleiss' kappa on the overlap set.
    Agreement(AgreementArgs),
    /// Pool annotations into a binary dataset.
    Pool(PoolArgs),
    /// Stratified train/test split.
    Split(SplitArgs),
    /// Fit the feature extractor on the training sentences.
    FitFeatures(FitFeaturesArgs),
    /// Train a classifier and save the model bundle.
    Train(TrainArgs),
    /// Cross-validated hyperparameter search on the training sentences.
    Gridsearch(GridsearchArgs),
    /// Score held-out sentences with a saved model.
    Evaluate(EvaluateArgs),
    /// Average precision against training-set size.
    LearningCurve(LearningCurveArgs),
    /// Hold out each term group in turn.
    Loto(LotoArgs),
    /// Rank unflagged sentences by model score.
    Discover(DiscoverArgs),
    /// Run the annotation and triage service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Vacancies as JSONL or CSV.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.288)]
    pub rate: f64,
    /// Receives sentences.jsonl and dataset.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AssignArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Comma-separated annotator ids.
    #[arg(long, value_delimiter = ',')]
    pub roster: Vec<String>,
    /// Sentences labelled by every annotator.
    #[arg(long)]
    pub overlap: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PoolArgs {
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitFeaturesArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Fit on the training side of this split.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Featurizer saved by `fit-features`, used instead of refitting.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Classifier parameters as JSON, e.g. a grid search's `best`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Logistic regularization strength; selects the logistic model.
    #[arg(long = "C")]
    pub c: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Logistic,
    Gbt,
    Forest,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Logistic => ModelKind::Logistic,
            KindArg::Gbt => ModelKind::Gbt,
            KindArg::Forest => ModelKind::Forest,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Ap,
    Auc,
}

#[derive(Debug, Args)]
pub struct GridsearchArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Classifier family to search; the configured classifier's by default.
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long, default_value_t = GRID_SEARCH_FOLDS)]
    pub folds: usize,
    #[arg(long, value_enum)]
    pub metric: Option<MetricArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Evaluate on the test side of this split; the whole dataset otherwise.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub pr_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LearningCurveArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = LEARNING_CURVE_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = LEARNING_CURVE_POINTS)]
    pub points: usize,
    #[arg(long, default_value_t = LEARNING_CURVE_MIN_FRACTION)]
    pub min_fraction: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LotoArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Extra classifier families compared under default parameters.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub compare: Vec<KindArg>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_DISCOVERY_K)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

/// The train/test split as written to disk: sentence ids, bound to the
/// dataset they were drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub test_fraction: f64,
    pub dataset_hash: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

impl SplitFile {
    pub fn indices(&self, dataset: &LabeledDataset) -> Result<(Vec<usize>, Vec<usize>)> {
        let hash = dataset.fingerprint();
        if hash != self.dataset_hash {
            bail!(
                "cli: split was drawn from dataset {}, not {hash}",
                self.dataset_hash
            );
        }
        let by_id: HashMap<&str, usize> = dataset
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.sentence_id.as_str(), i))
            .collect();
        let resolve = |ids: &[String]| {
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .copied()
                        .with_context(|| format!("cli: split names unknown sentence `{id}`"))
                })
                .collect::<Result<Vec<_>>>()
        };
        Ok((resolve(&self.train)?, resolve(&self.test)?))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).context("cli: serialization failed")?;
    text.push('\n');
    create_parent(path)?;
    std::fs::write(path, text).with_context(|| format!("cli: cannot write {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cli: cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("cli: {} is not valid", path.display()))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cli: cannot create {}", dir.display()))?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    create_parent(path)?;
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cli: cannot write {}", path.display()))?,
    ))
}

/// Sentence JSONL as written by `segment`, or raw vacancies which are
/// segmented on the fly.
pub fn load_corpus(path: &Path) -> Result<Vec<Sentence>> {
    if let Ok(s) = read_sentences(path) {
        return Ok(s);
    }
    let format = InputFormat::from_path(path)
        .with_context(|| format!("corpus: cannot tell the format of {}", path.display()))?;
    let mut out = Vec::new();
    for v in ingest(path, format)? {
        out.extend(segment_sentences(&v)?);
    }
    Ok(out)
}

fn required<'a>(flag: &'a Option<PathBuf>, config: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    flag.as_deref()
        .or(config.as_deref())
        .with_context(|| format!("cli: --{name} is required (flag or config)"))
}

fn load_dataset(path: &Path) -> Result<LabeledDataset> {
    let ds = LabeledDataset::load(path)?;
    if ds.is_empty() {
        bail!("cli: dataset {} has no labelled sentences", path.display());
    }
    Ok(ds)
}

fn model_name(fitted: &FittedMethod) -> String {
    let kind = serde_json::to_value(fitted.model.kind).expect("kind serializes");
    format!(
        "{}+{}",
        fitted.featurizer.space().kind,
        kind.as_str().unwrap_or_default()
    )
}

fn params_of(cfg: &Config, c: Option<f64>, params: Option<&Path>) -> Result<ClassifierParams> {
    if let Some(p) = params {
        let v: serde_json::Value = read_json(p)?;
        let inner = v.get("best").cloned().unwrap_or(v);
        return serde_json::from_value(inner)
            .with_context(|| format!("cli: {} holds no classifier parameters", p.display()));
    }
    Ok(match (c, cfg.classifier()) {
        (Some(c), ClassifierParams::Logistic(p)) => ClassifierParams::Logistic(LogisticParams { c, ..p }),
        (Some(c), _) => ClassifierParams::Logistic(LogisticParams::with_c(c)),
        (None, p) => p,
    })
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.catalog.is_some() {
        cfg.catalog = cli.catalog.clone();
    }
    let catalog = cfg.catalog()?;
    let seed = cfg.seed();
    let version = catalog.version().to_string();

    match cli.command {
        Command::Segment(a) => {
            let path = required(&a.corpus, &cfg.corpus, "corpus")?;
            let format = InputFormat::from_path(path)
                .with_context(|| format!("corpus: cannot tell the format of {}", path.display()))?;
            let mut sentences = Vec::new();
            for v in ingest(path, format)? {
                sentences.extend(segment_sentences(&v)?);
            }
            let mut w = create(&a.out)?;
            write_sentences(&mut w, &sentences)?;
            w.flush()?;
            log::info!("{} sentences", sentences.len());
        }
        Command::Synth(a) => {
            let spec = SyntheticSpec::dutch(a.n, a.rate, seed);
            let synth = generate_synthetic(&spec)?;
            std::fs::create_dir_all(&a.out_dir)
                .with_context(|| format!("cli: cannot create {}", a.out_dir.display()))?;
            let mut w = create(&a.out_dir.join("sentences.jsonl"))?;
            write_sentences(&mut w, &synth.sentences)?;
            w.flush()?;
            write_json(&a.out_dir.join("dataset.json"), &LabeledDataset::from_synthetic(&synth))?;
        }
        Command::Scan(a) => {
            let sentences = load_corpus(required(&a.corpus, &cfg.corpus, "corpus")?)?;
            let mut w = create(&a.out)?;
            for s in &sentences {
                for m in scan_sentence(s, &catalog) {
                    serde_json::to_writer(&mut w, &m)?;
                    w.write_all(b"\n")?;
                }
            }
            w.flush()?;
        }
        Command::Assign(a) => {
            let sentences = load_corpus(required(&a.corpus, &cfg.corpus, "corpus")?)?;
            let roster = if a.roster.is_empty() { cfg.annotate.roster.clone() } else { a.roster };
            let items: Vec<(String, String)> = sentences
                .iter()
                .filter(|s| is_annotatable(s))
                .filter_map(|s| term_group(s, &catalog).map(|g| (s.id.clone(), g)))
                .collect();
            let overlap = a.overlap.or(cfg.annotate.overlap).unwrap_or(0);
            let plan = plan_assignment(&items, &roster, overlap, seed)?;
            write_json(&a.out, &plan)?;
        }
        Command::Agreement(a) => {
            let plan: AssignmentPlan = read_json(required(&a.plan, &cfg.annotate.plan, "plan")?)?;
            let records = read_annotations(required(&a.labels, &cfg.annotate.labels, "labels")?)?;
            let report = fleiss_kappa(&overlap_records(&records, &plan))?;
            write_json(&a.out, &report)?;
        }
        Command::Pool(a) => {
            let plan: AssignmentPlan = read_json(required(&a.plan, &cfg.annotate.plan, "plan")?)?;
            let records = read_annotations(required(&a.labels, &cfg.annotate.labels, "labels")?)?;
            let sentences = load_corpus(required(&a.corpus, &cfg.corpus, "corpus")?)?;
            let ds = pool_labels(&records, &plan, &sentences)?;
            write_json(&a.out, &ds)?;
        }
        Command::Split(a) => {
            let ds = load_dataset(required(&a.dataset, &cfg.dataset, "dataset")?)?;
            let spec = SplitSpec {
                test_fraction: a.test_fraction.unwrap_or(cfg.test_fraction()),
                seed,
            };
            let split = stratified_split(&ds, &spec)?;
            let ids = |ix: &[usize]| ix.iter().map(|&i| ds.entries[i].sentence_id.clone()).collect();
            write_json(
                &a.out,
                &SplitFile {
                    seed,
                    test_fraction: spec.test_fraction,
                    dataset_hash: ds.fingerprint(),
                    train: ids(&split.train),
                    test: ids(&split.test),
                },
            )?;
        }
        Command::FitFeatures(a) => {
            let ds = load_dataset(required(&a.dataset, &cfg.dataset, "dataset")?)?;
            let train = train_side(&ds, a.split.as_deref().or(cfg.split.as_deref()))?;
            let featurizer = Featurizer::fit(&cfg.feature_method()?, &items(&ds, &train))?;
            let artifact = FeaturizerArtifact::of(&featurizer, cfg.features.embeddings.as_deref())?;
            write_json(&a.out, &artifact)?;
        }
        Command::Train(a) => {
            let ds = load_dataset(required(&a.dataset, &cfg.dataset, "dataset")?)?;
            let train = train_side(&ds, a.split.as_deref().or(cfg.split.as_deref()))?;
            let params = params_of(&cfg, a.c, a.params.as_deref())?;
            let train_items = items(&ds, &train);
            let labels: Vec<bool> = train.iter().map(|&i| ds.entries[i].hsd).collect();
            let fitted = match &a.features {
                Some(p) => {
                    let featurizer = read_json::<FeaturizerArtifact>(p)?.restore()?;
                    let x = featurizer.transform(&train_items)?;
                    let model = classify::train(&params, &x, &labels, seed, featurizer.space())?;
                    FittedMethod { featurizer, model }
                }
                None => FittedMethod::fit(&cfg.feature_method()?, &params, &train_items, &labels, seed)?,
            };
            write_json(&a.out, &ModelBundle::of(&fitted, cfg.features.embeddings.as_deref())?)?;
        }
        Command::Gridsearch(a) => {
            let ds = load_dataset(required(&a.dataset, &cfg.dataset, "dataset")?)?;
            let train = train_side(&ds, a.split.as_deref().or(cfg.split.as_deref()))?;
            let sub = ds.subset(&train);
            let kind = a.kind.map(ModelKind::from).unwrap_or(cfg.classifier().kind());
            let metric = match a.metric {
                Some(MetricArg::Ap) => Metric::Ap,
                Some(MetricArg::Auc) => Metric::Auc,
                None => cfg.metric.unwrap_or(Metric::Ap),
            };
            let points = cfg.grid_points(kind)?;
            let report = grid_search(&cfg.feature_method()?, &points, &sub, a.folds, metric, seed, &version)?;
            write_json(&a.out, &report)?;
        }
        Command::Evaluate(a) => {
            let bundle: ModelBundle = read_json(required(&a.model, &cfg.model, "model")?)?;
            let fitted = bundle.restore()?;
            let ds = load_dataset(required(&a.dataset, &cfg.dataset, "dataset")?)?;
            let test = match a.split.as_deref().or(cfg.split.as_deref()) {
                Some(p) => read_json::<SplitFile>(p)?.indices(&ds)?.1,
                None => (0..ds.len()).collect(),
            };
            let scores = classify::probabilities(&fitted.score(&items(&ds, &test))?);
            let labels: Vec<bool> = test.iter().map(|&i| ds.entries[i].hsd).collect();
            let provenance = Provenance {
                seed: fitted.model.seed,
                dataset_hash: ds.fingerprint(),
                catalog_version: version.clone(),
                method: model_name(&fitted),
            };
            let report = evaluate_scores(&scores, &labels, provenance)?;
            write_json(&a.out, &report)?;
            if let Some(p) = &a.pr_csv {
                let mut w = create(p)?;
                write_pr_curve_csv(&mut w, &report.pr_curve)?;
                w.flush()?;
            }
        }
        Command::LearningCurve(a) => {
            let ds = load_dataset(required(&a.dataset, &cfg.dataset, "dataset")?)?;
            let method = cfg.method()?;
            let fractions = log_fractions(a.points, a.min_fraction);
            let lc = learning_curve(&method, &ds, a.folds, &fractions, seed, &version)?;
            write_json(&a.out, &lc)?;
            if let Some(p) = &a.csv {
                let mut w = create(p)?;
                write_learning_curve_csv(&mut w, &lc)?;
                w.flush()?;
            }
        }
        Command::Loto(a) => {
            let ds = load_dataset(required(&a.dataset, &cfg.dataset, "dataset")?)?;
            let features = cfg.feature_method()?;
            let mut methods = vec![MethodSpec::new(features.clone(), cfg.classifier())];
            for k in a.compare {
                let params = default_params(k.into());
                if !methods.iter().any(|m| m.classifier.kind() == params.kind()) {
                    methods.push(MethodSpec::new(features.clone(), params));
                }
            }
            let report = leave_one_term_out(&methods, &ds, seed, &version)?;
            write_json(&a.out, &report)?;
        }
        Command::Discover(a) => {
            let bundle: ModelBundle = read_json(required(&a.model, &cfg.model, "model")?)?;
            let fitted = bundle.restore()?;
            let sentences: Vec<Sentence> = load_corpus(required(&a.corpus, &cfg.corpus, "corpus")?)?
                .into_iter()
                .filter(is_annotatable)
                .collect();
            let report = discover_unknown(&fitted, &sentences, &catalog, a.k)?;
            write_json(&a.out, &report)?;
        }
        Command::Serve(a) => {
            if a.bind.is_some() {
                cfg.serve.bind = a.bind;
            }
            if a.corpus.is_some() {
                cfg.corpus = a.corpus;
            }
            if a.plan.is_some() {
                cfg.annotate.plan = a.plan;
            }
            if a.model.is_some() {
                cfg.model = a.model;
            }
            if a.data_dir.is_some() {
                cfg.serve.data_dir = a.data_dir;
            }
            crate::service::serve_blocking(&cfg)?;
        }
    }
    Ok(())
}

fn default_params(kind: ModelKind) -> ClassifierParams {
    match kind {
        ModelKind::Logistic => ClassifierParams::Logistic(Default::default()),
        ModelKind::Gbt => ClassifierParams::Gbt(Default::default()),
        ModelKind::Forest => ClassifierParams::Forest(Default::default()),
    }
}

fn train_side(ds: &LabeledDataset, split: Option<&Path>) -> Result<Vec<usize>> {
    Ok(match split {
        Some(p) => read_json::<SplitFile>(p)?.indices(ds)?.0,
        None => (0..ds.len()).collect(),
    })
}

fn items<'a>(ds: &'a LabeledDataset, indices: &[usize]) -> Vec<Item<'a>> {
    indices
        .iter()
        .map(|&i| Item {
            id: &ds.entries[i].sentence_id,
            text: &ds.entries[i].text,
        })
        .collect()
}
