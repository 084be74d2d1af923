//! Vacancy ingestion, sentence segmentation and synthetic corpus generation.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CorpusError;
use crate::features::{hex, tokenize, TokenizerConfig};
use crate::seed::rng_for;
use crate::text::nfc;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vacancy {
    pub id: String,
    pub body: String,
    #[serde(default)]
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posted_date: Option<String>,
}

impl Vacancy {
    /// Builds a vacancy with its body normalized to NFC.
    pub fn new(id: impl Into<String>, body: &str) -> Self {
        Self {
            id: id.into(),
            body: nfc(body),
            source: String::new(),
            posted_date: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub vacancy_id: String,
    pub index: usize,
    pub text: String,
    /// `[start, end)` char offsets into the vacancy body.
    pub span: (usize, usize),
}

impl Sentence {
    /// A stand-alone sentence that is its own vacancy.
    pub fn standalone(id: impl Into<String>, text: &str) -> Self {
        let id = id.into();
        let text = nfc(text);
        let len = text.chars().count();
        Self {
            vacancy_id: id.clone(),
            id,
            index: 0,
            text,
            span: (0, len),
        }
    }
}

/// Sentence id for the `index`-th sentence of a vacancy.
pub fn sentence_id(vacancy_id: &str, index: usize) -> String {
    format!("{vacancy_id}#{index}")
}

/// Sentences with fewer than two tokens are kept in the corpus but are not
/// queued for annotation or classification.
pub fn is_annotatable(sentence: &Sentence) -> bool {
    tokenize(&sentence.text, &TokenizerConfig::default()).len() >= 2
}

const ABBREVIATIONS: &[&str] = &[
    "o.a.", "bijv.", "m/v.", "enz.", "e.d.", "d.w.z.", "incl.", "evt.", "ca.", "t.a.v.", "z.s.m.",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '»', '”', '’'];

fn ends_with_abbreviation(chars: &[char], end: usize) -> bool {
    let mut start = end;
    while start > 0 && !chars[start - 1].is_whitespace() {
        start -= 1;
    }
    let token: String = chars[start..end]
        .iter()
        .collect::<String>()
        .trim_start_matches(['(', '[', '"', '\''])
        .to_lowercase();
    ABBREVIATIONS.contains(&token.as_str())
}

/// Splits a vacancy body into sentences.
///
/// Boundaries are a run of `.`, `!` or `?` (plus closing quotes or brackets)
/// followed by whitespace or the end of the body, and blank lines. A period
/// ending one of the known Dutch abbreviations does not terminate. Sentence
/// spans are trimmed of surrounding whitespace, so everything between two
/// consecutive spans is whitespace.
pub fn segment_sentences(vacancy: &Vacancy) -> Result<Vec<Sentence>, CorpusError> {
    if vacancy.body.trim().is_empty() {
        return Err(CorpusError::EmptyInput(format!(
            "vacancy `{}` has an empty body",
            vacancy.id
        )));
    }
    let chars: Vec<char> = vacancy.body.chars().collect();
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i;
            while j < chars.len() && matches!(chars[j], '.' | '!' | '?') {
                j += 1;
            }
            while j < chars.len() && CLOSERS.contains(&chars[j]) {
                j += 1;
            }
            let at_break = j == chars.len() || chars[j].is_whitespace();
            if at_break && !(c == '.' && j == i + 1 && ends_with_abbreviation(&chars, j)) {
                cuts.push(j);
            }
            i = j;
            continue;
        }
        if c == '\n' {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_whitespace() && chars[j] != '\n' {
                j += 1;
            }
            if j < chars.len() && chars[j] == '\n' {
                cuts.push(i);
                i = j;
                continue;
            }
        }
        i += 1;
    }
    cuts.push(chars.len());

    let mut sentences = Vec::new();
    let mut start = 0;
    for cut in cuts {
        let (mut s, mut e) = (start, cut);
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            let index = sentences.len();
            sentences.push(Sentence {
                id: sentence_id(&vacancy.id, index),
                vacancy_id: vacancy.id.clone(),
                index,
                text: chars[s..e].iter().collect(),
                span: (s, e),
            });
        }
        start = cut;
    }
    Ok(sentences)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" | "json" => Some(Self::Jsonl),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn valid_date(value: &str) -> bool {
    chrono::NaiveDate::parse_from_str(value, "%Y-%m-%d").is_ok()
        || chrono::DateTime::parse_from_rfc3339(value).is_ok()
}

struct RawRecord {
    line: usize,
    id: Option<String>,
    body: Option<String>,
    source: Option<String>,
    posted_date: Option<String>,
}

/// Reads a vacancy file. Records without an id get `<filename>:<line>`.
pub fn ingest(path: &Path, format: InputFormat) -> Result<Vec<Vacancy>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    let raw = match format {
        InputFormat::Jsonl => read_jsonl(path, BufReader::new(file))?,
        InputFormat::Csv => read_csv(path, file)?,
    };
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let path_str = path.display().to_string();
    let malformed = |line: usize, message: String| CorpusError::Malformed {
        path: path_str.clone(),
        line,
        message,
    };

    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::with_capacity(raw.len());
    for rec in raw {
        let id = match rec.id {
            Some(id) if !id.is_empty() => id,
            _ => format!("{file_name}:{}", rec.line),
        };
        let body = rec
            .body
            .filter(|b| !b.trim().is_empty())
            .ok_or_else(|| malformed(rec.line, "empty or missing `body`".into()))?;
        if let Some(date) = &rec.posted_date {
            if !valid_date(date) {
                return Err(malformed(
                    rec.line,
                    format!("`posted_date` `{date}` is not an ISO-8601 date"),
                ));
            }
        }
        if let Some(&first) = seen.get(&id) {
            return Err(CorpusError::DuplicateId {
                id,
                first,
                second: rec.line,
            });
        }
        seen.insert(id.clone(), rec.line);
        out.push(Vacancy {
            id,
            body: nfc(&body),
            source: rec.source.unwrap_or_default(),
            posted_date: rec.posted_date,
        });
    }
    Ok(out)
}

fn read_jsonl(path: &Path, reader: impl BufRead) -> Result<Vec<RawRecord>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| CorpusError::Malformed {
            path: path.display().to_string(),
            line: line_no,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| malformed("record is not a JSON object".into()))?;
        let field = |key: &str| -> Result<Option<String>, CorpusError> {
            match obj.get(key) {
                None | Some(serde_json::Value::Null) => Ok(None),
                Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
                Some(_) => Err(malformed(format!("`{key}` must be a string"))),
            }
        };
        out.push(RawRecord {
            line: line_no,
            id: field("id")?,
            body: field("body")?,
            source: field("source")?,
            posted_date: field("posted_date")?,
        });
    }
    Ok(out)
}

fn read_csv(path: &Path, file: File) -> Result<Vec<RawRecord>, CorpusError> {
    let path_str = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Malformed {
            path: path_str.clone(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h.trim() == name);
    let body_col = column("body").ok_or_else(|| CorpusError::MissingColumn {
        path: path_str.clone(),
        column: "body".into(),
    })?;
    let (id_col, source_col, date_col) = (column("id"), column("source"), column("posted_date"));

    let mut out = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| CorpusError::Malformed {
            path: path_str.clone(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |col: Option<usize>| {
            col.and_then(|c| record.get(c))
                .map(str::to_string)
                .filter(|s| !s.is_empty())
        };
        out.push(RawRecord {
            line,
            id: get(id_col),
            body: get(Some(body_col)),
            source: get(source_col),
            posted_date: get(date_col),
        });
    }
    Ok(out)
}

/// Writes sentences as JSONL: `id, vacancy_id, index, text, span`.
pub fn write_sentences(mut writer: impl Write, sentences: &[Sentence]) -> std::io::Result<()> {
    for s in sentences {
        serde_json::to_writer(&mut writer, s)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Content hash over sentence ids and texts, in order.
pub fn fingerprint(sentences: &[Sentence]) -> String {
    let mut h = Sha256::new();
    for s in sentences {
        h.update(s.id.as_bytes());
        h.update([0]);
        h.update(s.text.as_bytes());
        h.update([0]);
    }
    hex(&h.finalize())
}

pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Sentence = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(s);
    }
    Ok(out)
}

/// A value for the `{term}` slot of a template, tagged with its term group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotFiller {
    pub text: String,
    pub group: String,
    /// Relative frequency among positive (discriminatory) sentences.
    pub positive_weight: f64,
    /// Relative frequency among negative sentences.
    pub negative_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_sentences: usize,
    pub planted_hsd_rate: f64,
    pub seed: u64,
    /// Templates with a `{term}` slot; `{job}` and `{city}` are optional.
    pub positive_templates: Vec<String>,
    pub negative_templates: Vec<String>,
    pub fillers: Vec<SlotFiller>,
    pub jobs: Vec<String>,
    pub cities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub sentences: Vec<Sentence>,
    pub labels: Vec<bool>,
    /// Term group of the filler planted in each sentence.
    pub groups: Vec<String>,
}

impl SyntheticCorpus {
    pub fn vacancies(&self) -> Vec<Vacancy> {
        self.sentences
            .iter()
            .map(|s| Vacancy {
                id: s.vacancy_id.clone(),
                body: s.text.clone(),
                source: "synthetic".into(),
                posted_date: None,
            })
            .collect()
    }
}

// Group rows of the published term inventory: (group, fillers, frequency, HSD share).
const DUTCH_GROUPS: &[(&str, &[&str], f64, f64)] = &[
    ("jongen(s)", &["jongen", "jongens"], 997.0, 0.109),
    ("man(nen)", &["man", "mannen"], 997.0, 0.256),
    ("mannelijk(e)", &["mannelijke collega", "mannelijke medewerker"], 505.0, 0.471),
    ("dame(s)", &["dame", "dames"], 985.0, 0.181),
    ("vrouw(en)", &["vrouw", "vrouwen"], 993.0, 0.200),
    ("vrouwelijk(e)", &["vrouwelijke collega", "vrouwelijke medewerker"], 1059.0, 0.607),
    (
        "other",
        &["enthousiaste jongen", "enthousiaste meid", "jonge god", "collega met ballen"],
        191.0,
        0.283,
    ),
    ("informal", &["kerel", "griet", "vent", "gozer"], 220.0, 0.177),
];

impl SyntheticSpec {
    /// Dutch templates and fillers shaped after the published term inventory.
    pub fn dutch(n_sentences: usize, planted_hsd_rate: f64, seed: u64) -> Self {
        let strings = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let mut fillers = Vec::new();
        for (group, texts, freq, share) in DUTCH_GROUPS {
            for t in texts.iter() {
                fillers.push(SlotFiller {
                    text: t.to_string(),
                    group: group.to_string(),
                    positive_weight: freq * share / texts.len() as f64,
                    negative_weight: freq * (1.0 - share) / texts.len() as f64,
                });
            }
        }
        Self {
            n_sentences,
            planted_hsd_rate,
            seed,
            positive_templates: strings(&[
                "Wij zoeken een {term} als {job} in {city}.",
                "Voor onze vestiging in {city} zoeken wij een ervaren {term} voor de functie van {job}.",
                "Ben jij de {term} die wij zoeken als {job}?",
                "Gezocht: een {term} voor de functie {job} in {city}.",
                "De ideale kandidaat voor deze vacature is een {term} met ervaring als {job}.",
                "Wij zijn op zoek naar een {term} die ons team in {city} komt versterken als {job}.",
                "Solliciteer nu als je een {term} bent en graag als {job} wilt werken.",
            ]),
            negative_templates: strings(&[
                "Als {job} in {city} help je iedere klant, of het nu een {term} is of een gezin.",
                "In deze rol begeleid je elke {term} die onze winkel in {city} bezoekt.",
                "Als {job} adviseer je bezoekers, bijvoorbeeld een {term}, over onze producten.",
                "Onze afdeling in {city} organiseert activiteiten voor iedere {term} uit de buurt.",
                "Je ondersteunt als {job} cliënten zoals een oudere {term} bij dagelijkse zorg.",
                "Het museum in {city} ontvangt dagelijks groepen, vaak met een {term} als gids.",
                "Tijdens je werk als {job} spreek je met patiënten, onder wie menig {term}.",
            ]),
            fillers,
            jobs: strings(&[
                "monteur", "verkoper", "kok", "chauffeur", "receptionist", "schoonmaker",
                "magazijnmedewerker", "beveiliger", "kapper", "timmerman", "administratief medewerker",
                "verpleegkundige",
            ]),
            cities: strings(&[
                "Amsterdam", "Rotterdam", "Utrecht", "Den Haag", "Eindhoven", "Groningen",
                "Tilburg", "Almere", "Breda", "Nijmegen",
            ]),
        }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if !(0.0..=1.0).contains(&self.planted_hsd_rate) {
            return Err(CorpusError::Config(format!(
                "planted_hsd_rate {} is outside [0, 1]",
                self.planted_hsd_rate
            )));
        }
        if self.positive_templates.is_empty() || self.negative_templates.is_empty() {
            return Err(CorpusError::Config(
                "both positive and negative template lists must be non-empty".into(),
            ));
        }
        if let Some(t) = self
            .positive_templates
            .iter()
            .chain(&self.negative_templates)
            .find(|t| !t.contains("{term}"))
        {
            return Err(CorpusError::Config(format!("template `{t}` has no {{term}} slot")));
        }
        if self.fillers.is_empty() {
            return Err(CorpusError::Config("filler list is empty".into()));
        }
        let needs = |slot: &str| {
            self.positive_templates
                .iter()
                .chain(&self.negative_templates)
                .any(|t| t.contains(slot))
        };
        if needs("{job}") && self.jobs.is_empty() {
            return Err(CorpusError::Config("templates use {job} but no jobs given".into()));
        }
        if needs("{city}") && self.cities.is_empty() {
            return Err(CorpusError::Config("templates use {city} but no cities given".into()));
        }
        Ok(())
    }
}

fn pick_weighted<'a, R: Rng>(rng: &mut R, items: &'a [SlotFiller], positive: bool) -> &'a SlotFiller {
    let weight = |f: &SlotFiller| {
        if positive {
            f.positive_weight
        } else {
            f.negative_weight
        }
    };
    let total: f64 = items.iter().map(weight).sum();
    if total <= 0.0 {
        return &items[rng.random_range(0..items.len())];
    }
    let mut target = rng.random::<f64>() * total;
    for f in items {
        target -= weight(f);
        if target < 0.0 {
            return f;
        }
    }
    items.last().expect("non-empty fillers")
}

/// Generates `n_sentences` single-sentence vacancies with exactly
/// `round(n * rate)` planted positives. Pure function of its input.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus, CorpusError> {
    spec.validate()?;
    let n = spec.n_sentences;
    let n_pos = ((n as f64) * spec.planted_hsd_rate).round() as usize;
    let mut rng = rng_for(spec.seed, "synthetic");
    let mut positive = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for &i in order.iter().take(n_pos) {
        positive[i] = true;
    }

    let width = n.to_string().len().max(1);
    let mut sentences = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for (i, &pos) in positive.iter().enumerate() {
        let templates = if pos {
            &spec.positive_templates
        } else {
            &spec.negative_templates
        };
        let template = &templates[rng.random_range(0..templates.len())];
        let filler = pick_weighted(&mut rng, &spec.fillers, pos);
        let job = if spec.jobs.is_empty() {
            ""
        } else {
            spec.jobs[rng.random_range(0..spec.jobs.len())].as_str()
        };
        let city = if spec.cities.is_empty() {
            ""
        } else {
            spec.cities[rng.random_range(0..spec.cities.len())].as_str()
        };
        let text = template
            .replace("{term}", &filler.text)
            .replace("{job}", job)
            .replace("{city}", city);
        let vacancy_id = format!("syn-{i:0width$}");
        let mut s = Sentence::standalone(sentence_id(&vacancy_id, 0), &text);
        s.vacancy_id = vacancy_id;
        sentences.push(s);
        groups.push(filler.group.clone());
    }
    Ok(SyntheticCorpus {
        sentences,
        labels: positive,
        groups,
    })
}
