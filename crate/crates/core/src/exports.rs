//! Plot-ready data files and report bundles.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coherence::CoherenceReport;
use crate::comparative::{GroupTest, TopicMatch, Trend};
use crate::error::{Error, Result};
use crate::interpretation::LabelSet;
use crate::provenance::sha256_hex;
use crate::scalar::{fmt_shortest, Real};
use crate::topic_engine::TopicModel;

pub const MANIFEST: &str = "MANIFEST.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudEntry<T> {
    pub term: String,
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordCloudSpec<T> {
    pub topic: usize,
    pub label: Option<String>,
    pub entries: Vec<CloudEntry<T>>,
}

pub fn export_wordcloud<T: Real>(model: &TopicModel<T>, labels: Option<&LabelSet>, topic: usize, m: usize) -> Result<WordCloudSpec<T>> {
    if m == 0 {
        return Err(Error::InvalidConfig("word cloud size must be at least 1".into()));
    }
    let entries = model.top_words(topic, m)?.into_iter().map(|(term, weight)| CloudEntry { term, weight }).collect();
    let label = labels.and_then(|l| l.labels.get(&topic).cloned());
    Ok(WordCloudSpec { topic, label, entries })
}

/// Column means of θ.
pub fn export_prevalence<T: Real>(model: &TopicModel<T>) -> Vec<T> {
    let n = T::of_usize(model.n_docs().max(1));
    (0..model.k()).map(|k| model.theta.column(k).sum::<T>() / n).collect()
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn opt<T: Real>(x: Option<T>) -> String {
    x.map(fmt_shortest).unwrap_or_default()
}

/// `topic,label,mean_weight`
pub fn prevalence_csv<T: Real>(model: &TopicModel<T>, labels: Option<&LabelSet>) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(["topic", "label", "mean_weight"]).map_err(csv_err)?;
    for (k, mean) in export_prevalence(model).into_iter().enumerate() {
        let label = labels.and_then(|l| l.labels.get(&k)).cloned().unwrap_or_default();
        w.write_record([k.to_string(), label, fmt_shortest(mean)]).map_err(csv_err)?;
    }
    finish(w)
}

/// `k,topic,score` with one `mean` row per K; failed Ks appear with an empty score.
pub fn coherence_csv<T: Real>(report: &CoherenceReport<T>) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(["k", "topic", "score", "note"]).map_err(csv_err)?;
    let mut ks: Vec<usize> = report.per_k.keys().chain(report.failed.keys()).copied().collect();
    ks.sort_unstable();
    for k in ks {
        if let Some(scores) = report.per_k.get(&k) {
            for (t, s) in scores.per_topic.iter().enumerate() {
                w.write_record([k.to_string(), t.to_string(), fmt_shortest(*s), String::new()]).map_err(csv_err)?;
            }
            let note = if report.recommended_k == Some(k) { "recommended" } else { "" };
            w.write_record([k.to_string(), "mean".into(), fmt_shortest(scores.mean), note.into()]).map_err(csv_err)?;
        } else if let Some(f) = report.failed.get(&k) {
            w.write_record([k.to_string(), "mean".into(), String::new(), format!("failed: {}", f.code)]).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// `topic,key,kind,statistic,df,df2,p,p_adjusted,groups,missing`
pub fn tests_csv<T: Real>(tests: &[GroupTest<T>]) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(["topic", "key", "kind", "statistic", "df", "df2", "p", "p_adjusted", "groups", "missing"]).map_err(csv_err)?;
    for t in tests {
        let groups = t.groups.iter().map(|g| format!("{}:n={}:mean={}", g.label, g.n, fmt_shortest(g.mean))).collect::<Vec<_>>().join(";");
        w.write_record([
            t.topic.to_string(),
            t.key.clone(),
            t.result.kind.as_str().to_string(),
            fmt_shortest(t.result.statistic),
            fmt_shortest(t.result.df),
            opt(t.result.df2),
            fmt_shortest(t.result.p_value),
            opt(t.adjusted_p),
            groups,
            t.missing.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// `topic,bin,mean,n`; undated documents go in a trailing `(undated)` row.
pub fn trend_csv<T: Real>(trends: &[Trend<T>]) -> Result<Vec<u8>> {
    let mut w = writer();
    w.write_record(["topic", "bin", "mean", "n"]).map_err(csv_err)?;
    for tr in trends {
        for p in &tr.points {
            w.write_record([tr.topic.to_string(), p.bin.clone(), fmt_shortest(p.mean), p.n.to_string()]).map_err(csv_err)?;
        }
        if tr.undated > 0 {
            w.write_record([tr.topic.to_string(), "(undated)".into(), String::new(), tr.undated.to_string()]).map_err(csv_err)?;
        }
    }
    finish(w)
}

/// Serde JSON already prints floats in shortest round-trip form.
pub fn to_json<S: Serialize>(value: &S) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn match_json<T: Real>(m: &TopicMatch<T>) -> Result<Vec<u8>> {
    to_json(m)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// A set of files keyed by relative path, written with a hash manifest.
#[derive(Debug, Clone, Default)]
pub struct Bundle {
    pub files: BTreeMap<String, Vec<u8>>,
}

impl Bundle {
    pub fn add(&mut self, path: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(path.into(), bytes);
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.files
            .iter()
            .map(|(path, bytes)| ManifestEntry { path: path.clone(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 })
            .collect()
    }

    /// Writes every file plus `MANIFEST.json` under `dir`, replacing any
    /// previous contents.
    pub fn write(&self, dir: &Path) -> Result<Vec<ManifestEntry>> {
        let parent = dir.parent().unwrap_or(Path::new("."));
        std::fs::create_dir_all(parent)?;
        let staging = parent.join(format!(".{}.tmp", dir.file_name().and_then(|s| s.to_str()).unwrap_or("bundle")));
        if staging.exists() {
            std::fs::remove_dir_all(&staging)?;
        }
        for (path, bytes) in &self.files {
            let target = staging.join(path);
            if let Some(p) = target.parent() {
                std::fs::create_dir_all(p)?;
            }
            std::fs::write(target, bytes)?;
        }
        let manifest = self.manifest();
        std::fs::write(staging.join(MANIFEST), to_json(&manifest)?)?;
        if dir.exists() {
            std::fs::remove_dir_all(dir)?;
        }
        std::fs::rename(&staging, dir)?;
        Ok(manifest)
    }
}

/// Checks every file listed in a written manifest against its hash.
pub fn verify_manifest(dir: &Path) -> Result<()> {
    let entries: Vec<ManifestEntry> = serde_json::from_slice(&std::fs::read(dir.join(MANIFEST))?)?;
    for e in entries {
        let bytes = std::fs::read(dir.join(&e.path)).map_err(|_| Error::CorruptArtifact(e.path.clone(), "missing".into()))?;
        if sha256_hex(&bytes) != e.sha256 {
            return Err(Error::CorruptArtifact(e.path, "hash mismatch".into()));
        }
    }
    Ok(())
}
