//! Search-term catalog and the baseline "forbidden list" scanner.
//!
//! Every term is a regular expression with optional exception patterns. A
//! sentence is flagged when some term matches and none of that term's
//! exceptions match anywhere in the same sentence.

use std::cmp::Reverse;
use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::TermsError;
use crate::text::{nfc, ByteToChar};

/// Catalog shipped with the crate: eight gender term groups in Dutch.
pub const DEFAULT_CATALOG_JSON: &str = include_str!("../data/catalog_nl.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchTerm {
    pub id: String,
    pub label: String,
    pub pattern: String,
    #[serde(default)]
    pub exceptions: Vec<String>,
    pub group: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogFile {
    pub version: String,
    pub terms: Vec<SearchTerm>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMatch {
    pub sentence_id: String,
    pub term_id: String,
    pub span: (usize, usize),
    pub suppressed: bool,
}

#[derive(Debug, Clone)]
struct CompiledTerm {
    term: SearchTerm,
    regex: Regex,
    exceptions: Vec<Regex>,
}

/// A compiled, immutable catalog. Terms are held in id order, which is the
/// catalog order used for tie-breaking; scans do not depend on the order of
/// terms in the source file.
#[derive(Debug, Clone)]
pub struct TermCatalog {
    version: String,
    terms: Vec<CompiledTerm>,
    groups: Vec<String>,
}

fn has_leading_anchor(p: &str) -> bool {
    ["^", "\\b", "\\B", "\\A"].iter().any(|a| p.starts_with(a))
}

fn has_trailing_anchor(p: &str) -> bool {
    (p.ends_with('$') && !p.ends_with("\\$"))
        || ["\\b", "\\B", "\\z"].iter().any(|a| p.ends_with(a))
}

fn compile_one(term_id: &str, pattern: &str) -> Result<Regex, TermsError> {
    let err = |e: regex::Error| TermsError::Pattern {
        term_id: term_id.to_string(),
        pattern: pattern.to_string(),
        message: e.to_string(),
    };
    // Validate the pattern as written so that error positions refer to it.
    RegexBuilder::new(pattern)
        .case_insensitive(true)
        .build()
        .map_err(err)?;
    // A pattern anchored on either side manages its own boundaries.
    let wrapped = if has_leading_anchor(pattern) || has_trailing_anchor(pattern) {
        pattern.to_string()
    } else {
        format!("\\b(?:{pattern})\\b")
    };
    RegexBuilder::new(&wrapped)
        .case_insensitive(true)
        .build()
        .map_err(err)
}

impl TermCatalog {
    pub fn compile(file: CatalogFile) -> Result<Self, TermsError> {
        if file.terms.is_empty() {
            return Err(TermsError::Config("catalog has no terms".into()));
        }
        let mut groups: Vec<String> = Vec::new();
        for t in &file.terms {
            if t.id.is_empty() {
                return Err(TermsError::Config("term with empty id".into()));
            }
            if !groups.contains(&t.group) {
                groups.push(t.group.clone());
            }
        }
        let mut terms = Vec::with_capacity(file.terms.len());
        for term in file.terms {
            let regex = compile_one(&term.id, &nfc(&term.pattern))?;
            let exceptions = term
                .exceptions
                .iter()
                .map(|e| compile_one(&term.id, &nfc(e)))
                .collect::<Result<Vec<_>, _>>()?;
            terms.push(CompiledTerm {
                term,
                regex,
                exceptions,
            });
        }
        terms.sort_by(|a, b| a.term.id.cmp(&b.term.id));
        if let Some(w) = terms.windows(2).find(|w| w[0].term.id == w[1].term.id) {
            return Err(TermsError::Config(format!("duplicate term id `{}`", w[0].term.id)));
        }
        Ok(Self {
            version: file.version,
            terms,
            groups,
        })
    }

    pub fn from_json(json: &str) -> Result<Self, TermsError> {
        if json.trim().is_empty() {
            return Err(TermsError::Config("catalog file is empty".into()));
        }
        let file: CatalogFile =
            serde_json::from_str(json).map_err(|e| TermsError::Config(e.to_string()))?;
        Self::compile(file)
    }

    pub fn load(path: &Path) -> Result<Self, TermsError> {
        let json = std::fs::read_to_string(path).map_err(|source| TermsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&json)
    }

    pub fn default_dutch() -> Self {
        Self::from_json(DEFAULT_CATALOG_JSON).expect("shipped catalog compiles")
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Term groups in order of first appearance in the source file.
    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn terms(&self) -> impl Iterator<Item = &SearchTerm> {
        self.terms.iter().map(|t| &t.term)
    }

    pub fn term(&self, id: &str) -> Option<&SearchTerm> {
        self.terms
            .binary_search_by(|t| t.term.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.terms[i].term)
    }

    fn rank(&self, id: &str) -> usize {
        self.terms
            .binary_search_by(|t| t.term.id.as_str().cmp(id))
            .unwrap_or(usize::MAX)
    }

    pub fn group_of_term(&self, id: &str) -> Option<&str> {
        self.term(id).map(|t| t.group.as_str())
    }
}

/// All catalog matches in `text`, ordered by start, then longest first,
/// then catalog order.
pub fn scan_text(sentence_id: &str, text: &str, catalog: &TermCatalog) -> Vec<TermMatch> {
    let text = nfc(text);
    let offsets = ByteToChar::new(&text);
    let mut found: Vec<(usize, TermMatch)> = Vec::new();
    for (rank, t) in catalog.terms.iter().enumerate() {
        let mut hits = t.regex.find_iter(&text).filter(|m| !m.is_empty()).peekable();
        if hits.peek().is_none() {
            continue;
        }
        let suppressed = t.exceptions.iter().any(|e| e.is_match(&text));
        for m in hits {
            found.push((
                rank,
                TermMatch {
                    sentence_id: sentence_id.to_string(),
                    term_id: t.term.id.clone(),
                    span: (offsets.char_offset(m.start()), offsets.char_offset(m.end())),
                    suppressed,
                },
            ));
        }
    }
    found.sort_by_key(|(rank, m)| (m.span.0, Reverse(m.span.1 - m.span.0), *rank));
    found.into_iter().map(|(_, m)| m).collect()
}

pub fn scan_sentence(sentence: &Sentence, catalog: &TermCatalog) -> Vec<TermMatch> {
    scan_text(&sentence.id, &sentence.text, catalog)
}

pub fn baseline_flag(sentence: &Sentence, catalog: &TermCatalog) -> bool {
    scan_sentence(sentence, catalog).iter().any(|m| !m.suppressed)
}

/// The unsuppressed match that decides a sentence's term group: longest
/// wins, ties broken by leftmost start and then catalog order.
pub fn dominant_match<'a>(matches: &'a [TermMatch], catalog: &TermCatalog) -> Option<&'a TermMatch> {
    matches
        .iter()
        .filter(|m| !m.suppressed)
        .min_by_key(|m| (Reverse(m.span.1 - m.span.0), m.span.0, catalog.rank(&m.term_id)))
}

/// Term group of a flagged sentence, `None` when the baseline does not flag it.
pub fn term_group(sentence: &Sentence, catalog: &TermCatalog) -> Option<String> {
    let matches = scan_sentence(sentence, catalog);
    dominant_match(&matches, catalog)
        .and_then(|m| catalog.group_of_term(&m.term_id))
        .map(str::to_string)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermFrequencyRow {
    pub group: String,
    pub frequency: usize,
    pub hsd: usize,
    pub hsd_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermFrequencyReport {
    pub catalog_version: String,
    pub rows: Vec<TermFrequencyRow>,
    pub total: TermFrequencyRow,
}

fn row(group: &str, frequency: usize, hsd: usize) -> TermFrequencyRow {
    TermFrequencyRow {
        group: group.to_string(),
        frequency,
        hsd,
        hsd_fraction: if frequency == 0 {
            0.0
        } else {
            hsd as f64 / frequency as f64
        },
    }
}

/// Per-group count of flagged sentences and their HSD share, plus a totals row.
/// Each flagged sentence counts once, under its dominant match's group.
pub fn term_frequency_report(
    sentences: &[Sentence],
    labels: &[bool],
    catalog: &TermCatalog,
) -> Result<TermFrequencyReport, TermsError> {
    if sentences.len() != labels.len() {
        return Err(TermsError::Misaligned {
            sentences: sentences.len(),
            labels: labels.len(),
        });
    }
    let groups = catalog.groups();
    let mut counts = vec![(0usize, 0usize); groups.len()];
    for (s, &hsd) in sentences.iter().zip(labels) {
        if let Some(g) = term_group(s, catalog) {
            let i = groups.iter().position(|x| *x == g).expect("group from catalog");
            counts[i].0 += 1;
            counts[i].1 += hsd as usize;
        }
    }
    let rows: Vec<_> = groups
        .iter()
        .zip(&counts)
        .map(|(g, &(f, h))| row(g, f, h))
        .collect();
    let total = row(
        "Total",
        counts.iter().map(|c| c.0).sum(),
        counts.iter().map(|c| c.1).sum(),
    );
    Ok(TermFrequencyReport {
        catalog_version: catalog.version.clone(),
        rows,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(text: &str) -> Sentence {
        Sentence::standalone("s", text)
    }

    #[test]
    fn default_catalog_has_eight_groups() {
        let c = TermCatalog::default_dutch();
        assert_eq!(
            c.groups(),
            &[
                "jongen(s)",
                "man(nen)",
                "mannelijk(e)",
                "dame(s)",
                "vrouw(en)",
                "vrouwelijk(e)",
                "other",
                "informal"
            ]
        );
    }

    #[test]
    fn male_adjective_matches() {
        let c = TermCatalog::default_dutch();
        let m = scan_sentence(&s("Wij zoeken een mannelijke kandidaat"), &c);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].term_id, "mannelijk");
        assert_eq!(m[0].span, (15, 25));
        assert!(!m[0].suppressed);
    }

    #[test]
    fn inclusive_phrasing_is_suppressed() {
        let c = TermCatalog::default_dutch();
        let sent = s("mannelijke of vrouwelijke kandidaten welkom");
        let m = scan_sentence(&sent, &c);
        assert_eq!(m.len(), 2);
        assert!(m.iter().all(|m| m.suppressed));
        assert!(!baseline_flag(&sent, &c));
    }

    #[test]
    fn no_terms_no_matches() {
        let c = TermCatalog::default_dutch();
        assert!(scan_sentence(&s("Wij zoeken een ervaren manager"), &c).is_empty());
    }

    #[test]
    fn word_boundaries_apply() {
        let c = TermCatalog::default_dutch();
        assert!(!baseline_flag(&s("De manager en de timmerman"), &c));
        assert!(baseline_flag(&s("Ben jij onze MAN?"), &c));
    }

    #[test]
    fn explicit_anchor_is_respected() {
        let file = CatalogFile {
            version: "t".into(),
            terms: vec![SearchTerm {
                id: "prefix".into(),
                label: "man-".into(),
                pattern: "\\bman".into(),
                exceptions: vec![],
                group: "g".into(),
                translation: None,
            }],
        };
        let c = TermCatalog::compile(file).unwrap();
        assert!(baseline_flag(&s("de manager"), &c));
    }

    #[test]
    fn unbalanced_pattern_names_itself() {
        let json = r#"{"version":"x","terms":[{"id":"man","label":"m","pattern":"man(nen","exceptions":[],"group":"g"}]}"#;
        let err = TermCatalog::from_json(json).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("man(nen"), "{msg}");
        assert!(msg.contains("`man`"), "{msg}");
    }

    #[test]
    fn empty_catalogs_are_rejected() {
        assert!(matches!(TermCatalog::from_json(""), Err(TermsError::Config(_))));
        assert!(matches!(
            TermCatalog::from_json(r#"{"version":"x","terms":[]}"#),
            Err(TermsError::Config(_))
        ));
    }

    #[test]
    fn longest_match_decides_group() {
        let c = TermCatalog::default_dutch();
        let sent = s("Ben jij onze man voor de zaterdag?");
        let m = scan_sentence(&sent, &c);
        assert_eq!(m.len(), 2);
        // Same start: the longer phrase is listed first.
        assert_eq!(m[0].term_id, "other-onze-man");
        assert_eq!(term_group(&sent, &c).as_deref(), Some("other"));
        assert_eq!(
            term_group(&s("Wij zoeken enthousiaste jongens"), &c).as_deref(),
            Some("other")
        );
    }

    #[test]
    fn frequency_report_counts() {
        let c = TermCatalog::default_dutch();
        let sents = vec![
            s("Wij zoeken een vrouwelijke collega."),
            s("Voor vrouwelijke klanten hebben wij een speciale afdeling."),
            s("Ons team bestaat uit twintig mannen."),
            s("Geen enkele term hier."),
        ];
        let r = term_frequency_report(&sents, &[true, false, false, false], &c).unwrap();
        let female = r.rows.iter().find(|r| r.group == "vrouwelijk(e)").unwrap();
        assert_eq!((female.frequency, female.hsd), (2, 1));
        assert_eq!(female.hsd_fraction, 0.5);
        assert_eq!((r.total.frequency, r.total.hsd), (3, 1));

        let r = term_frequency_report(&sents, &[false; 4], &c).unwrap();
        assert!(r.rows.iter().all(|r| r.hsd_fraction == 0.0));
        assert!(term_frequency_report(&sents, &[true], &c).is_err());
    }
}
