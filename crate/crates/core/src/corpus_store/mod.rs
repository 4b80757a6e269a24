//! Documents, corpora, assemblages and fit assessments.

mod filter;
mod fit;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub use filter::{CmpOp, Predicate};
pub use fit::{
    score as fit_score, verdict as fit_verdict, Answer, ChecklistItem, Dimension, FitReport,
    FitThresholds, ItemResponse, Response, Verdict, CHECKLIST,
};

/// Bucket name for documents that lack the grouping key.
pub const MISSING_BUCKET: &str = "(missing)";

/// Metadata keys every document carries.
pub const BUILTIN_KEYS: [&str; 5] = ["id", "corpus", "source_study", "context", "timestamp"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub source_study: String,
    pub context: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, String>,
}

impl Document {
    /// Value of a metadata key; `corpus` is supplied by the caller since
    /// documents do not know which corpus holds them.
    pub fn metadata(&self, corpus: &str, key: &str) -> Option<String> {
        match key {
            "id" => Some(self.id.clone()),
            "corpus" => Some(corpus.to_string()),
            "source_study" => Some(self.source_study.clone()),
            "context" => Some(self.context.clone()),
            "timestamp" => self.timestamp.map(|d| d.to_string()),
            other => self.extra.get(other).cloned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub documents: Vec<Document>,
    #[serde(default)]
    pub origin_note: String,
}

impl Corpus {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), ..Default::default() }
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// Serialises the corpus in the ingest format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for d in &self.documents {
            out.push_str(&serde_json::to_string(d).expect("document serialises"));
            out.push('\n');
        }
        out
    }
}

/// Reference to one document of one corpus. Ordered by (corpus, id).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DocRef {
    pub corpus: String,
    pub id: String,
}

impl DocRef {
    pub fn new(corpus: impl Into<String>, id: impl Into<String>) -> Self {
        Self { corpus: corpus.into(), id: id.into() }
    }
}

impl fmt::Display for DocRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.corpus, self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assemblage {
    pub name: String,
    pub corpora: Vec<String>,
    pub member_refs: Vec<DocRef>,
    pub filter_spec: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RejectReason {
    DuplicateId,
    EmptyText,
    ParseError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub line: usize,
    pub id: Option<String>,
    pub code: RejectReason,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: usize,
    pub errors: Vec<RecordError>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Warning {
    EmptyAssemblage,
}

/// In-memory view of a project's documents. Callers own persistence and
/// serialise mutations.
#[derive(Debug, Clone, Default)]
pub struct CorpusStore {
    pub corpora: BTreeMap<String, Corpus>,
    pub assemblages: BTreeMap<String, Assemblage>,
    pub fits: BTreeMap<String, FitReport>,
}

impl CorpusStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Ingests newline-delimited JSON records into `corpus_name`.
    ///
    /// Each record is validated and accepted or rejected on its own. Blank
    /// lines are skipped. A leading byte-order mark rejects the whole input.
    pub fn ingest<R: BufRead>(&mut self, corpus_name: &str, source: R, append: bool) -> Result<IngestReport> {
        validate_name(corpus_name)?;
        if self.corpora.contains_key(corpus_name) && !append {
            return Err(Error::CorpusExists(corpus_name.to_string()));
        }
        let mut staged = self
            .corpora
            .get(corpus_name)
            .cloned()
            .unwrap_or_else(|| Corpus::new(corpus_name));
        let mut seen: BTreeSet<String> = staged.documents.iter().map(|d| d.id.clone()).collect();
        let mut report = IngestReport::default();

        for (idx, line) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line_no == 1 && line.starts_with('\u{feff}') {
                return Err(Error::BomRejected);
            }
            if line.trim().is_empty() {
                continue;
            }
            match parse_record(&line) {
                Err(message) => report.reject(line_no, None, RejectReason::ParseError, message),
                Ok(doc) if doc.text.trim().is_empty() => {
                    report.reject(line_no, Some(doc.id), RejectReason::EmptyText, "text is empty".into())
                }
                Ok(doc) if seen.contains(&doc.id) => {
                    let msg = format!("id `{}` already present", doc.id);
                    report.reject(line_no, Some(doc.id), RejectReason::DuplicateId, msg)
                }
                Ok(doc) => {
                    seen.insert(doc.id.clone());
                    staged.documents.push(doc);
                    report.accepted += 1;
                }
            }
        }
        self.corpora.insert(corpus_name.to_string(), staged);
        Ok(report)
    }

    /// All metadata keys present on at least one document, plus the built-ins.
    pub fn known_keys(&self) -> BTreeSet<String> {
        let mut keys: BTreeSet<String> = BUILTIN_KEYS.iter().map(|k| k.to_string()).collect();
        for c in self.corpora.values() {
            for d in &c.documents {
                keys.extend(d.extra.keys().cloned());
            }
        }
        keys
    }

    /// Members of `corpus_names` matching `predicate`, ordered by (corpus, id).
    pub fn evaluate_filter(&self, corpus_names: &[String], predicate: &str) -> Result<Vec<DocRef>> {
        let pred = Predicate::parse(predicate)?;
        let known = self.known_keys();
        if let Some(k) = pred.keys().into_iter().find(|k| !known.contains(*k)) {
            return Err(Error::UnknownKey(k.to_string()));
        }
        let mut members = Vec::new();
        for name in corpus_names {
            let corpus = self
                .corpora
                .get(name)
                .ok_or_else(|| Error::UnknownCorpus(name.clone()))?;
            for d in &corpus.documents {
                if pred.eval(&|key: &str| d.metadata(name, key)) {
                    members.push(DocRef::new(name.clone(), d.id.clone()));
                }
            }
        }
        members.sort();
        members.dedup();
        Ok(members)
    }

    pub fn create_assemblage(
        &mut self,
        name: &str,
        corpus_names: &[String],
        predicate: &str,
    ) -> Result<(Assemblage, Vec<Warning>)> {
        validate_name(name)?;
        let member_refs = self.evaluate_filter(corpus_names, predicate)?;
        let mut corpora = corpus_names.to_vec();
        corpora.sort();
        corpora.dedup();
        let warnings = if member_refs.is_empty() { vec![Warning::EmptyAssemblage] } else { vec![] };
        let a = Assemblage {
            name: name.to_string(),
            corpora,
            member_refs,
            filter_spec: predicate.to_string(),
        };
        self.assemblages.insert(name.to_string(), a.clone());
        Ok((a, warnings))
    }

    pub fn assemblage(&self, name: &str) -> Result<&Assemblage> {
        self.assemblages
            .get(name)
            .ok_or_else(|| Error::UnknownAssemblage(name.to_string()))
    }

    pub fn assess_fit(
        &mut self,
        assemblage: &str,
        responses: &BTreeMap<String, Response>,
        thresholds: &FitThresholds,
    ) -> Result<FitReport> {
        self.assemblage(assemblage)?;
        let report = fit::build_report(assemblage, responses, thresholds)?;
        self.fits.insert(assemblage.to_string(), report.clone());
        Ok(report)
    }

    /// Assemblage members paired with their documents, in member order.
    pub fn resolve(&self, assemblage: &str) -> Result<Vec<(DocRef, &Document)>> {
        let a = self.assemblage(assemblage)?;
        a.member_refs
            .iter()
            .map(|r| {
                let doc = self
                    .corpora
                    .get(&r.corpus)
                    .and_then(|c| c.get(&r.id))
                    .ok_or_else(|| Error::CorruptArtifact(format!("assemblage {assemblage}"), format!("dangling member {r}")))?;
                Ok((r.clone(), doc))
            })
            .collect()
    }

    /// Partitions assemblage members by the value of `key`.
    pub fn query_documents(&self, assemblage: &str, key: &str) -> Result<BTreeMap<String, Vec<DocRef>>> {
        let members = self.resolve(assemblage)?;
        if !self.known_keys().contains(key) {
            return Err(Error::UnknownKey(key.to_string()));
        }
        Ok(partition(members.iter().map(|(r, d)| (r.clone(), d.metadata(&r.corpus, key)))))
    }
}

/// Buckets `(ref, value)` pairs; `None` values land in [`MISSING_BUCKET`].
pub fn partition<I>(items: I) -> BTreeMap<String, Vec<DocRef>>
where
    I: IntoIterator<Item = (DocRef, Option<String>)>,
{
    let mut out: BTreeMap<String, Vec<DocRef>> = BTreeMap::new();
    for (r, v) in items {
        out.entry(v.unwrap_or_else(|| MISSING_BUCKET.to_string())).or_default().push(r);
    }
    out
}

impl IngestReport {
    fn reject(&mut self, line: usize, id: Option<String>, code: RejectReason, message: String) {
        self.rejected += 1;
        self.errors.push(RecordError { line, id, code, message });
    }
}

fn parse_record(line: &str) -> std::result::Result<Document, String> {
    let mut doc: Document = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if doc.id.trim().is_empty() {
        return Err("id is empty".into());
    }
    doc.id = doc.id.nfc().collect();
    doc.text = doc.text.nfc().collect();
    doc.source_study = doc.source_study.nfc().collect();
    doc.context = doc.context.nfc().collect();
    Ok(doc)
}

/// Names become file names, so they must be plain.
pub fn validate_name(name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name.len() <= 128
        && name.chars().all(|c| c.is_alphanumeric() || "-_.".contains(c))
        && !name.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidName(name.to_string()))
    }
}
