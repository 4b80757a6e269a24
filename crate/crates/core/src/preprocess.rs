//! Tokenisation, vocabulary construction and bag-of-words vectorisation.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::{Arc, LazyLock};

use chrono::{DateTime, Utc};
use regex::{Captures, Regex};
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Version tag of the bundled stoplist.
pub const DEFAULT_STOPLIST_VERSION: &str = "en-v1";
const DEFAULT_STOPLIST_DATA: &str = include_str!("../data/stopwords_en_v1.txt");

const NEGATORS: [&str; 5] = ["no", "not", "never", "nor", "cannot"];

static PUNCT_OR_SYMBOL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[\p{P}\p{S}]").expect("valid regex"));

/// Parses a stoplist file: one token per line, `#` starts a comment.
pub fn parse_stoplist(src: &str) -> BTreeSet<String> {
    src.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.nfc().collect::<String>())
        .collect()
}

pub fn default_stoplist() -> BTreeSet<String> {
    parse_stoplist(DEFAULT_STOPLIST_DATA)
}

/// One stoplist extension, kept for the audit trail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoplistChange {
    pub added: BTreeSet<String>,
    pub actor: String,
    pub at: DateTime<Utc>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub lowercase: bool,
    pub strip_punctuation: bool,
    pub negation_merge: bool,
    pub stoplist: BTreeSet<String>,
    pub min_df: usize,
    pub max_df_ratio: f64,
    pub min_token_len: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stoplist_history: Vec<StoplistChange>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: true,
            negation_merge: true,
            stoplist: default_stoplist(),
            min_df: 2,
            max_df_ratio: 0.95,
            min_token_len: 2,
            stoplist_history: Vec::new(),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_df < 1 {
            return Err(Error::InvalidConfig("min_df must be >= 1".into()));
        }
        if !(self.max_df_ratio > 0.0 && self.max_df_ratio <= 1.0) {
            return Err(Error::InvalidConfig("max_df_ratio must be in (0, 1]".into()));
        }
        if self.min_token_len < 1 {
            return Err(Error::InvalidConfig("min_token_len must be >= 1".into()));
        }
        Ok(())
    }

    /// Returns a copy whose stoplist is the union with `additions`.
    /// The change is logged unless `additions` is empty.
    pub fn extend_stoplist(&self, additions: &BTreeSet<String>, actor: &str, reason: &str) -> PreprocessConfig {
        let mut next = self.clone();
        if additions.is_empty() {
            return next;
        }
        next.stoplist.extend(additions.iter().cloned());
        next.stoplist_history.push(StoplistChange {
            added: additions.clone(),
            actor: actor.to_string(),
            at: Utc::now(),
            reason: reason.to_string(),
        });
        next
    }

    /// The fields that influence output, without the audit history.
    pub fn effective(&self) -> PreprocessConfig {
        PreprocessConfig { stoplist_history: Vec::new(), ..self.clone() }
    }

    pub fn stoplist_text(&self) -> String {
        let mut s = String::new();
        for w in &self.stoplist {
            s.push_str(w);
            s.push('\n');
        }
        s
    }
}

fn is_negator(tok: &str) -> bool {
    let lower = tok.to_lowercase();
    NEGATORS.contains(&lower.as_str()) || lower.ends_with("n't")
}

/// Fuses each run of negators with the next token as `not_<token>`;
/// a trailing run of negators is dropped.
pub fn merge_negations<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut pending = false;
    for t in tokens {
        let t = t.as_ref();
        if is_negator(t) {
            pending = true;
        } else if pending {
            out.push(format!("not_{t}"));
            pending = false;
        } else {
            out.push(t.to_string());
        }
    }
    out
}

fn strip_punctuation(text: &str) -> String {
    PUNCT_OR_SYMBOL
        .replace_all(text, |caps: &Captures| {
            let m = caps.get(0).expect("whole match");
            let is_apostrophe = matches!(m.as_str(), "'" | "\u{2019}");
            let before = text[..m.start()].chars().next_back();
            let after = text[m.end()..].chars().next();
            let intra_word = before.is_some_and(char::is_alphanumeric) && after.is_some_and(char::is_alphanumeric);
            if is_apostrophe && intra_word {
                "'".to_string()
            } else {
                String::new()
            }
        })
        .into_owned()
}

/// Splits `text` into tokens: NFC, lowercase, punctuation strip, whitespace
/// split, negation merge, stoplist removal, length filter, in that order.
pub fn tokenize(text: &str, config: &PreprocessConfig) -> Vec<String> {
    let mut s: String = text.nfc().collect();
    if config.lowercase {
        s = s.to_lowercase();
    }
    if config.strip_punctuation {
        s = strip_punctuation(&s);
    }
    let mut tokens: Vec<String> = s.split_whitespace().map(str::to_string).collect();
    if config.negation_merge {
        tokens = merge_negations(&tokens);
    }
    if config.strip_punctuation {
        // apostrophes only survived long enough for negation detection
        for t in tokens.iter_mut() {
            if t.contains('\'') {
                *t = t.replace('\'', "");
            }
        }
    }
    filter_tokens(tokens, config)
}

/// Stoplist and length filters; idempotent.
pub fn filter_tokens(tokens: Vec<String>, config: &PreprocessConfig) -> Vec<String> {
    tokens
        .into_iter()
        .filter(|t| !t.is_empty() && !config.stoplist.contains(t) && t.chars().count() >= config.min_token_len)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from an ordered term list; duplicates are an error.
    pub fn from_terms(terms: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::VocabMismatch(format!("duplicate term `{t}`")));
            }
        }
        Ok(Self { terms, index })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, i: usize) -> &str {
        &self.terms[i]
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Sidecar format: one term per line, line number = index.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.terms {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(src: &str) -> Result<Self> {
        Self::from_terms(src.lines().map(str::to_string).collect())
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.terms.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let terms = Vec::<String>::deserialize(d)?;
        Self::from_terms(terms).map_err(serde::de::Error::custom)
    }
}

/// Vocabulary from tokenised documents: drops stoplisted terms and terms
/// outside the document-frequency window, then orders by descending corpus
/// frequency with lexicographic ties.
pub fn build_vocabulary<S: AsRef<str>>(docs: &[Vec<S>], config: &PreprocessConfig) -> Result<Vocabulary> {
    config.validate()?;
    if docs.iter().all(|d| d.is_empty()) {
        return Err(Error::EmptyInput);
    }
    let n_docs = docs.len() as f64;
    // term -> (document frequency, corpus frequency)
    let mut stats: HashMap<&str, (usize, u64)> = HashMap::new();
    for doc in docs {
        let mut seen = BTreeSet::new();
        for t in doc {
            let t = t.as_ref();
            let e = stats.entry(t).or_insert((0, 0));
            e.1 += 1;
            if seen.insert(t) {
                e.0 += 1;
            }
        }
    }
    let mut kept: Vec<(&str, u64)> = stats
        .into_iter()
        .filter(|(t, (df, _))| {
            !config.stoplist.contains(*t) && *df >= config.min_df && (*df as f64 / n_docs) <= config.max_df_ratio
        })
        .map(|(t, (_, cf))| (t, cf))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_terms(kept.into_iter().map(|(t, _)| t.to_string()).collect())
}

/// Sparse document-term counts. Rows follow the assemblage document order.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTermMatrix {
    pub doc_ids: Vec<String>,
    pub vocab: Arc<Vocabulary>,
    /// Per document, `(term index, count)` sorted by term index, counts > 0.
    pub rows: Vec<Vec<(u32, u32)>>,
    pub token_total: u64,
}

impl DocTermMatrix {
    pub fn n_docs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_terms(&self) -> usize {
        self.vocab.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn doc_len(&self, d: usize) -> u64 {
        self.rows[d].iter().map(|&(_, c)| c as u64).sum()
    }

    /// Indices of rows with no in-vocabulary tokens.
    pub fn empty_rows(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|&d| self.rows[d].is_empty()).collect()
    }

    pub fn count(&self, d: usize, w: usize) -> u32 {
        self.rows[d]
            .binary_search_by_key(&(w as u32), |&(t, _)| t)
            .map(|i| self.rows[d][i].1)
            .unwrap_or(0)
    }

    /// Builds directly from dense rows; used for fixtures and fold-in.
    pub fn from_dense(doc_ids: Vec<String>, vocab: Arc<Vocabulary>, dense: &[Vec<u32>]) -> Result<Self> {
        if doc_ids.len() != dense.len() {
            return Err(Error::VocabMismatch("doc id count differs from row count".into()));
        }
        let mut rows = Vec::with_capacity(dense.len());
        let mut total = 0u64;
        for r in dense {
            if r.len() != vocab.len() {
                return Err(Error::VocabMismatch(format!("row has {} columns, vocabulary {}", r.len(), vocab.len())));
            }
            let row: Vec<(u32, u32)> = r.iter().enumerate().filter(|(_, &c)| c > 0).map(|(w, &c)| (w as u32, c)).collect();
            total += row.iter().map(|&(_, c)| c as u64).sum::<u64>();
            rows.push(row);
        }
        Ok(Self { doc_ids, vocab, rows, token_total: total })
    }

    /// Sparse triple export: header `docs=D terms=V nnz=N`, then
    /// `doc_index term_index count` lines.
    pub fn to_triples(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "docs={} terms={} nnz={}", self.n_docs(), self.n_terms(), self.nnz());
        for (d, row) in self.rows.iter().enumerate() {
            for &(w, c) in row {
                let _ = writeln!(s, "{d} {w} {c}");
            }
        }
        s
    }

    pub fn from_triples(src: &str, doc_ids: Vec<String>, vocab: Arc<Vocabulary>) -> Result<Self> {
        let bad = |m: String| Error::CorruptArtifact("dtm".into(), m);
        let mut lines = src.lines();
        let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
        let mut dims = [0usize; 3];
        for (slot, (part, key)) in dims.iter_mut().zip(header.split_whitespace().zip(["docs=", "terms=", "nnz="])) {
            *slot = part
                .strip_prefix(key)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(format!("bad header `{header}`")))?;
        }
        let [n_docs, n_terms, nnz] = dims;
        if n_docs != doc_ids.len() || n_terms != vocab.len() {
            return Err(bad("header disagrees with doc ids or vocabulary".into()));
        }
        let mut rows = vec![Vec::new(); n_docs];
        let mut total = 0u64;
        let mut seen = 0;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let nums: Vec<u64> = line.split_whitespace().map(|x| x.parse::<u64>()).collect::<std::result::Result<_, _>>().map_err(|e| bad(e.to_string()))?;
            let [d, w, c] = nums[..] else { return Err(bad(format!("bad line `{line}`"))) };
            if d as usize >= n_docs || w as usize >= n_terms || c == 0 {
                return Err(bad(format!("entry out of range `{line}`")));
            }
            rows[d as usize].push((w as u32, c as u32));
            total += c;
            seen += 1;
        }
        if seen != nnz {
            return Err(bad(format!("expected {nnz} entries, found {seen}")));
        }
        for r in rows.iter_mut() {
            r.sort_unstable();
        }
        Ok(Self { doc_ids, vocab, rows, token_total: total })
    }
}

/// Counts in-vocabulary tokens per document; out-of-vocabulary tokens are dropped.
pub fn vectorize<S: AsRef<str>>(doc_ids: Vec<String>, docs: &[Vec<S>], vocab: Arc<Vocabulary>) -> Result<DocTermMatrix> {
    if vocab.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    if doc_ids.len() != docs.len() {
        return Err(Error::VocabMismatch("doc id count differs from document count".into()));
    }
    let mut rows = Vec::with_capacity(docs.len());
    let mut total = 0u64;
    for doc in docs {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for t in doc {
            if let Some(w) = vocab.get(t.as_ref()) {
                *counts.entry(w as u32).or_insert(0) += 1;
            }
        }
        let mut row: Vec<(u32, u32)> = counts.into_iter().collect();
        row.sort_unstable();
        total += row.iter().map(|&(_, c)| c as u64).sum::<u64>();
        rows.push(row);
    }
    Ok(DocTermMatrix { doc_ids, vocab, rows, token_total: total })
}
