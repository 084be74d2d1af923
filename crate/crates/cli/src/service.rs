//! Annotation and triage service.
//!
//! Every response, errors included, is a JSON envelope carrying the corpus
//! hash and catalog version. Label writes go through a single store behind
//! a mutex and are on disk before the response is sent. Reports run on the
//! blocking pool from a copy of the records, so they never hold the lock
//! while computing.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use vacscreen_core::annotate::{
    fleiss_kappa, majority_label, overlap_records, AnnotationLabel, AnnotationRecord,
    AssignmentPlan,
};
use vacscreen_core::classify::probabilities;
use vacscreen_core::corpus::{self, is_annotatable, Sentence};
use vacscreen_core::pipeline::{Item, ModelBundle};
use vacscreen_core::store::{LabelStore, DEFAULT_COMPACT_EVERY};
use vacscreen_core::terms::{scan_sentence, term_frequency_report, term_group, TermCatalog};

use crate::commands::{load_corpus, read_json};
use crate::config::{Config, Role, TokenEntry, DEFAULT_BIND};

/// Soft per-item guidance for annotators; never enforced.
pub const TIMER_HINT_SECONDS: u32 = 30;
pub const DEFAULT_QUEUE_LIMIT: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct Envelope<T: Serialize> {
    pub dataset_hash: String,
    pub catalog_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSpan {
    pub term_id: String,
    pub group: String,
    /// `[start, end)` char offsets into the sentence text.
    pub span: (usize, usize),
    pub suppressed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueueKind {
    Annotate,
    Triage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueItem {
    pub sentence_id: String,
    pub text: String,
    pub matches: Vec<MatchSpan>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub kind: QueueKind,
    pub position: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueueResponse {
    pub kind: QueueKind,
    pub user: String,
    pub timer_hint_seconds: u32,
    pub remaining: usize,
    pub items: Vec<QueueItem>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub sentence_id: String,
    #[serde(default)]
    pub annotator_id: Option<String>,
    pub label: AnnotationLabel,
    #[serde(default)]
    pub timestamp: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentenceView {
    pub sentence: Sentence,
    pub term_group: Option<String>,
    pub matches: Vec<MatchSpan>,
    pub score: Option<f64>,
    pub labels: Vec<AnnotationRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsRow {
    pub group: String,
    pub frequency: usize,
    pub labelled: usize,
    pub hsd: usize,
    /// Share of labelled sentences whose majority label is `yes`.
    pub hsd_fraction: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stats {
    pub sentences: usize,
    pub flagged: usize,
    pub records: usize,
    pub rows: Vec<StatsRow>,
    pub total: StatsRow,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProgressRow {
    pub annotator: String,
    pub assigned: usize,
    pub done: usize,
    pub remaining: usize,
}

/// Everything the handlers read. Only the store changes after startup.
pub struct AppState {
    sentences: Vec<Sentence>,
    index: HashMap<String, usize>,
    groups: Vec<Option<String>>,
    catalog: TermCatalog,
    plan: Option<AssignmentPlan>,
    scores: Option<Vec<f64>>,
    /// Scored sentence indices by descending score, ties by id.
    triage_order: Vec<usize>,
    tokens: BTreeMap<String, TokenEntry>,
    store: Arc<Mutex<LabelStore>>,
    dataset_hash: String,
    catalog_version: String,
}

pub struct ServiceSettings {
    pub corpus: PathBuf,
    pub data_dir: PathBuf,
    pub plan: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub tokens: BTreeMap<String, TokenEntry>,
    pub compact_every: usize,
}

impl ServiceSettings {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        Ok(Self {
            corpus: cfg.corpus.clone().context("serve: no corpus configured")?,
            data_dir: cfg.serve.data_dir.clone().context("serve: no data_dir configured")?,
            plan: cfg.annotate.plan.clone(),
            model: cfg.model.clone(),
            tokens: cfg.serve.tokens.clone(),
            compact_every: cfg.serve.compact_every.unwrap_or(DEFAULT_COMPACT_EVERY),
        })
    }
}

impl AppState {
    pub fn load(settings: &ServiceSettings, catalog: TermCatalog) -> Result<Self> {
        if settings.tokens.is_empty() {
            bail!("serve: the token roster is empty");
        }
        let sentences = load_corpus(&settings.corpus)?;
        let index: HashMap<String, usize> = sentences
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.clone(), i))
            .collect();
        if index.len() != sentences.len() {
            bail!("serve: duplicate sentence ids in {}", settings.corpus.display());
        }
        let plan: Option<AssignmentPlan> = settings.plan.as_deref().map(read_json).transpose()?;
        if let Some(p) = &plan {
            if let Some(id) = p.strata.keys().find(|id| !index.contains_key(*id)) {
                bail!("serve: plan names sentence `{id}` missing from the corpus");
            }
        }
        let groups = sentences.iter().map(|s| term_group(s, &catalog)).collect();
        let scores = match &settings.model {
            Some(path) => {
                let bundle: ModelBundle = read_json(path)?;
                let fitted = bundle.restore()?;
                let items: Vec<Item<'_>> = sentences
                    .iter()
                    .map(|s| Item {
                        id: &s.id,
                        text: &s.text,
                    })
                    .collect();
                Some(probabilities(&fitted.score(&items)?))
            }
            None => None,
        };
        let mut triage_order: Vec<usize> = match &scores {
            Some(_) => (0..sentences.len())
                .filter(|&i| is_annotatable(&sentences[i]))
                .collect(),
            None => Vec::new(),
        };
        if let Some(sc) = &scores {
            triage_order.sort_by(|&a, &b| {
                sc[b].total_cmp(&sc[a])
                    .then_with(|| sentences[a].id.cmp(&sentences[b].id))
            });
        }
        let store = LabelStore::open_with(&settings.data_dir, settings.compact_every)?;
        Ok(Self {
            dataset_hash: corpus::fingerprint(&sentences),
            catalog_version: catalog.version().to_string(),
            sentences,
            index,
            groups,
            catalog,
            plan,
            scores,
            triage_order,
            tokens: settings.tokens.clone(),
            store: Arc::new(Mutex::new(store)),
        })
    }

    fn ok<T: Serialize>(&self, status: StatusCode, data: T) -> Response {
        let body = Envelope {
            dataset_hash: self.dataset_hash.clone(),
            catalog_version: self.catalog_version.clone(),
            data: Some(data),
            error: None,
        };
        (status, Json(body)).into_response()
    }

    fn fail(&self, status: StatusCode, message: impl Into<String>) -> Response {
        let body: Envelope<()> = Envelope {
            dataset_hash: self.dataset_hash.clone(),
            catalog_version: self.catalog_version.clone(),
            data: None,
            error: Some(ApiError {
                status: status.as_u16(),
                message: message.into(),
            }),
        };
        let mut resp = (status, Json(body)).into_response();
        if status == StatusCode::UNAUTHORIZED {
            resp.headers_mut()
                .insert(header::WWW_AUTHENTICATE, "Bearer".parse().expect("static header"));
        }
        resp
    }

    fn auth(&self, headers: &HeaderMap) -> Result<&TokenEntry, Response> {
        let token = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim);
        match token.and_then(|t| self.tokens.get(t)) {
            Some(entry) => Ok(entry),
            None => Err(self.fail(StatusCode::UNAUTHORIZED, "missing or unknown bearer token")),
        }
    }

    fn matches(&self, s: &Sentence) -> Vec<MatchSpan> {
        scan_sentence(s, &self.catalog)
            .into_iter()
            .map(|m| MatchSpan {
                group: self
                    .catalog
                    .group_of_term(&m.term_id)
                    .unwrap_or_default()
                    .to_string(),
                term_id: m.term_id,
                span: m.span,
                suppressed: m.suppressed,
            })
            .collect()
    }

    fn queue_item(&self, i: usize, kind: QueueKind, position: usize) -> QueueItem {
        let s = &self.sentences[i];
        QueueItem {
            sentence_id: s.id.clone(),
            text: s.text.clone(),
            matches: self.matches(s),
            score: match kind {
                QueueKind::Triage => self.scores.as_ref().map(|sc| sc[i]),
                QueueKind::Annotate => None,
            },
            kind,
            position,
        }
    }

    fn records(&self) -> Vec<AnnotationRecord> {
        self.store.lock().expect("store lock").records()
    }

    pub fn dataset_hash(&self) -> &str {
        &self.dataset_hash
    }

    pub fn catalog_version(&self) -> &str {
        &self.catalog_version
    }
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/queue", get(queue))
        .route("/labels", get(list_labels).post(submit_label))
        .route("/sentences/{id}", get(sentence))
        .route("/reports/{kind}", get(report))
        .route("/stats", get(stats))
        .fallback(not_found)
        .with_state(state)
}

async fn not_found(State(st): State<Shared>) -> Response {
    st.fail(StatusCode::NOT_FOUND, "no such endpoint")
}

async fn queue(
    State(st): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    let who = match st.auth(&headers) {
        Ok(w) => w.clone(),
        Err(r) => return r,
    };
    let limit = match q.get("limit").map(|v| v.parse::<usize>()) {
        None => DEFAULT_QUEUE_LIMIT,
        Some(Ok(n)) => n,
        Some(Err(_)) => return st.fail(StatusCode::BAD_REQUEST, "limit must be a non-negative integer"),
    };
    let kind = match q.get("kind").map(String::as_str) {
        None | Some("annotate") => QueueKind::Annotate,
        Some("triage") => QueueKind::Triage,
        Some(other) => return st.fail(StatusCode::BAD_REQUEST, format!("unknown queue kind `{other}`")),
    };
    let user = match q.get("annotator") {
        Some(a) if *a != who.user && who.role != Role::Reviewer => {
            return st.fail(StatusCode::FORBIDDEN, "annotators may only read their own queue")
        }
        Some(a) => a.clone(),
        None => who.user.clone(),
    };
    let done: HashSet<String> = st
        .store
        .lock()
        .expect("store lock")
        .for_annotator(&user)
        .into_iter()
        .map(|r| r.sentence_id)
        .collect();
    let pending: Vec<usize> = match kind {
        QueueKind::Annotate => {
            let Some(plan) = &st.plan else {
                return st.fail(StatusCode::CONFLICT, "no assignment plan loaded");
            };
            if !plan.roster.contains(&user) {
                return st.fail(StatusCode::NOT_FOUND, format!("`{user}` is not in the assignment plan"));
            }
            plan.queue_for(&user)
                .iter()
                .filter(|id| !done.contains(*id))
                .map(|id| st.index[id])
                .collect()
        }
        QueueKind::Triage => {
            if st.scores.is_none() {
                return st.fail(StatusCode::CONFLICT, "no model loaded");
            }
            st.triage_order
                .iter()
                .copied()
                .filter(|&i| !done.contains(&st.sentences[i].id))
                .collect()
        }
    };
    let items = pending
        .iter()
        .take(limit)
        .enumerate()
        .map(|(pos, &i)| st.queue_item(i, kind, pos))
        .collect();
    st.ok(
        StatusCode::OK,
        QueueResponse {
            kind,
            user,
            timer_hint_seconds: TIMER_HINT_SECONDS,
            remaining: pending.len(),
            items,
        },
    )
}

async fn submit_label(State(st): State<Shared>, headers: HeaderMap, body: Bytes) -> Response {
    let who = match st.auth(&headers) {
        Ok(w) => w.clone(),
        Err(r) => return r,
    };
    let sub: LabelSubmission = match serde_json::from_slice(&body) {
        Ok(s) => s,
        Err(e) => return st.fail(StatusCode::BAD_REQUEST, format!("invalid submission: {e}")),
    };
    if let Some(a) = &sub.annotator_id {
        if *a != who.user {
            return st.fail(StatusCode::FORBIDDEN, "annotator_id does not match the bearer token");
        }
    }
    if !st.index.contains_key(&sub.sentence_id) {
        return st.fail(StatusCode::NOT_FOUND, format!("unknown sentence `{}`", sub.sentence_id));
    }
    let record = AnnotationRecord {
        sentence_id: sub.sentence_id,
        annotator_id: who.user,
        label: sub.label,
        timestamp: sub.timestamp,
    };
    let store = Arc::clone(&st.store);
    let written = tokio::task::spawn_blocking(move || store.lock().expect("store lock").append(record)).await;
    match written {
        Ok(Ok(entry)) => st.ok(StatusCode::CREATED, entry),
        Ok(Err(e)) => st.fail(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => st.fail(StatusCode::INTERNAL_SERVER_ERROR, format!("serve: write task failed: {e}")),
    }
}

async fn list_labels(
    State(st): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<HashMap<String, String>>,
) -> Response {
    if let Err(r) = st.auth(&headers) {
        return r;
    }
    let keep = |r: &AnnotationRecord| {
        q.get("sentence_id").is_none_or(|s| *s == r.sentence_id)
            && q.get("annotator_id").is_none_or(|a| *a == r.annotator_id)
    };
    if q.get("history").is_some_and(|v| v == "true" || v == "1") {
        let store = Arc::clone(&st.store);
        let history = tokio::task::spawn_blocking(move || store.lock().expect("store lock").history()).await;
        return match history {
            Ok(Ok(entries)) => {
                let v: Vec<_> = entries.into_iter().filter(|e| keep(&e.record)).collect();
                st.ok(StatusCode::OK, v)
            }
            Ok(Err(e)) => st.fail(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
            Err(e) => st.fail(StatusCode::INTERNAL_SERVER_ERROR, format!("serve: read task failed: {e}")),
        };
    }
    let records: Vec<AnnotationRecord> = st.records().into_iter().filter(|r| keep(r)).collect();
    st.ok(StatusCode::OK, records)
}

async fn sentence(State(st): State<Shared>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    if let Err(r) = st.auth(&headers) {
        return r;
    }
    let Some(&i) = st.index.get(&id) else {
        return st.fail(StatusCode::NOT_FOUND, format!("unknown sentence `{id}`"));
    };
    let s = &st.sentences[i];
    let view = SentenceView {
        sentence: s.clone(),
        term_group: st.groups[i].clone(),
        matches: st.matches(s),
        score: st.scores.as_ref().map(|sc| sc[i]),
        labels: st.store.lock().expect("store lock").for_sentence(&id),
    };
    st.ok(StatusCode::OK, view)
}

async fn report(State(st): State<Shared>, headers: HeaderMap, Path(kind): Path<String>) -> Response {
    if let Err(r) = st.auth(&headers) {
        return r;
    }
    if !matches!(kind.as_str(), "agreement" | "term-frequency" | "progress") {
        return st.fail(StatusCode::NOT_FOUND, format!("unknown report `{kind}`"));
    }
    let records = st.records();
    let worker = Arc::clone(&st);
    let result = tokio::task::spawn_blocking(move || build_report(&worker, &kind, &records)).await;
    match result {
        Ok(Ok(value)) => st.ok(StatusCode::OK, value),
        Ok(Err((status, msg))) => st.fail(status, msg),
        Err(e) => st.fail(StatusCode::INTERNAL_SERVER_ERROR, format!("serve: report task failed: {e}")),
    }
}

fn build_report(
    st: &AppState,
    kind: &str,
    records: &[AnnotationRecord],
) -> Result<serde_json::Value, (StatusCode, String)> {
    match kind {
        "agreement" => {
            let plan = st
                .plan
                .as_ref()
                .ok_or((StatusCode::CONFLICT, "no assignment plan loaded".to_string()))?;
            let complete = complete_overlap(&overlap_records(records, plan), plan.roster.len());
            let report = fleiss_kappa(&complete).map_err(|e| (StatusCode::CONFLICT, e.to_string()))?;
            Ok(to_value(&report))
        }
        "term-frequency" => {
            let (sentences, labels) = labelled_majorities(st, records);
            let report = term_frequency_report(&sentences, &labels, &st.catalog)
                .map_err(|e| (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
            Ok(to_value(&report))
        }
        _ => {
            let plan = st
                .plan
                .as_ref()
                .ok_or((StatusCode::CONFLICT, "no assignment plan loaded".to_string()))?;
            let done: HashSet<(&str, &str)> = records
                .iter()
                .map(|r| (r.sentence_id.as_str(), r.annotator_id.as_str()))
                .collect();
            let rows: Vec<ProgressRow> = plan
                .roster
                .iter()
                .map(|a| {
                    let queue = plan.queue_for(a);
                    let finished = queue.iter().filter(|id| done.contains(&(id.as_str(), a.as_str()))).count();
                    ProgressRow {
                        annotator: a.clone(),
                        assigned: queue.len(),
                        done: finished,
                        remaining: queue.len() - finished,
                    }
                })
                .collect();
            Ok(to_value(&rows))
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("report serializes")
}

/// Overlap subjects rated by the whole roster; partially rated ones wait.
fn complete_overlap(records: &[AnnotationRecord], raters: usize) -> Vec<AnnotationRecord> {
    let mut count: HashMap<&str, usize> = HashMap::new();
    for r in records {
        *count.entry(&r.sentence_id).or_default() += 1;
    }
    records
        .iter()
        .filter(|r| count[r.sentence_id.as_str()] == raters)
        .cloned()
        .collect()
}

/// Labelled sentences whose votes have a `yes` or `no` majority, in corpus order.
fn labelled_majorities(st: &AppState, records: &[AnnotationRecord]) -> (Vec<Sentence>, Vec<bool>) {
    let mut votes: BTreeMap<usize, Vec<AnnotationLabel>> = BTreeMap::new();
    for r in records {
        if let Some(&i) = st.index.get(&r.sentence_id) {
            votes.entry(i).or_default().push(r.label);
        }
    }
    let mut sentences = Vec::new();
    let mut labels = Vec::new();
    for (i, v) in votes {
        match majority_label(&v) {
            AnnotationLabel::Yes => labels.push(true),
            AnnotationLabel::No => labels.push(false),
            AnnotationLabel::Unknown => continue,
        }
        sentences.push(st.sentences[i].clone());
    }
    (sentences, labels)
}

async fn stats(State(st): State<Shared>, headers: HeaderMap) -> Response {
    if let Err(r) = st.auth(&headers) {
        return r;
    }
    let records = st.records();
    let worker = Arc::clone(&st);
    let result = tokio::task::spawn_blocking(move || compute_stats(&worker, &records)).await;
    match result {
        Ok(s) => st.ok(StatusCode::OK, s),
        Err(e) => st.fail(StatusCode::INTERNAL_SERVER_ERROR, format!("serve: stats task failed: {e}")),
    }
}

fn compute_stats(st: &AppState, records: &[AnnotationRecord]) -> Stats {
    let (labelled, labels) = labelled_majorities(st, records);
    let verdict: HashMap<&str, bool> = labelled.iter().map(|s| s.id.as_str()).zip(labels).collect();
    let groups = st.catalog.groups();
    let mut rows: Vec<StatsRow> = groups
        .iter()
        .map(|g| StatsRow {
            group: g.clone(),
            frequency: 0,
            labelled: 0,
            hsd: 0,
            hsd_fraction: None,
        })
        .collect();
    let mut flagged = 0;
    for (s, g) in st.sentences.iter().zip(&st.groups) {
        let Some(g) = g else { continue };
        flagged += 1;
        let row = &mut rows[groups.iter().position(|x| x == g).expect("group from catalog")];
        row.frequency += 1;
        if let Some(&hsd) = verdict.get(s.id.as_str()) {
            row.labelled += 1;
            row.hsd += hsd as usize;
        }
    }
    let fraction = |r: &mut StatsRow| {
        r.hsd_fraction = (r.labelled > 0).then(|| r.hsd as f64 / r.labelled as f64);
    };
    let mut total = StatsRow {
        group: "Total".into(),
        frequency: rows.iter().map(|r| r.frequency).sum(),
        labelled: rows.iter().map(|r| r.labelled).sum(),
        hsd: rows.iter().map(|r| r.hsd).sum(),
        hsd_fraction: None,
    };
    rows.iter_mut().for_each(fraction);
    fraction(&mut total);
    Stats {
        sentences: st.sentences.len(),
        flagged,
        records: records.len(),
        rows,
        total,
    }
}

/// Binds and serves until interrupted.
pub async fn serve(cfg: &Config) -> Result<()> {
    let settings = ServiceSettings::from_config(cfg)?;
    let state = Arc::new(AppState::load(&settings, cfg.catalog()?)?);
    let bind = cfg.serve.bind.as_deref().unwrap_or(DEFAULT_BIND);
    let addr: SocketAddr = bind.parse().with_context(|| format!("serve: bad bind address `{bind}`"))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("serve: cannot bind {addr}"))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .context("serve: server error")
}

pub fn serve_blocking(cfg: &Config) -> Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("serve: cannot start runtime")?
        .block_on(serve(cfg))
}
