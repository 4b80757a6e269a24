//! Whole-project report bundles.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{Project, RunStatus};
use crate::comparative::{Bin, TestChoice};
use crate::error::{Error, Result};
use crate::exports::{self, Bundle, ManifestEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RunEntry {
    id: String,
    phase: String,
    assemblage: String,
    k: usize,
    seed: u64,
    manifest_sha256: String,
    feedback_consumed: Vec<String>,
    labelled: bool,
    failed_sweep_ks: BTreeMap<usize, String>,
    notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FailedRunEntry {
    id: String,
    stage: String,
    code: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReportIndex {
    project: String,
    runs: Vec<RunEntry>,
    failed_runs: Vec<FailedRunEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub dir: PathBuf,
    pub runs: Vec<String>,
    pub files: Vec<ManifestEntry>,
}

impl Project {
    /// Writes `reports/report-<timestamp>/` for one run or every finished run.
    /// The timestamp is the latest finish time among the included runs, so an
    /// unchanged project re-exports to the same directory and bytes.
    pub fn export_report(&self, run: Option<&str>) -> Result<ReportSummary> {
        let all = self.runs()?;
        let done: Vec<_> = match run {
            Some(id) => {
                let rec = all.iter().find(|r| r.id == id).ok_or_else(|| Error::UnknownRun(id.to_string()))?;
                if rec.status != RunStatus::Done {
                    return Err(Error::RunNotDone(id.to_string()));
                }
                vec![rec.clone()]
            }
            None => all.iter().filter(|r| r.status == RunStatus::Done).cloned().collect(),
        };
        if done.is_empty() {
            return Err(Error::NoRuns);
        }
        let stamp = done.iter().filter_map(|r| r.finished_at).max().expect("done runs have finish times");
        let config = self.config();
        let store = self.store()?;
        let known = store.known_keys();
        let mut bundle = Bundle::default();
        let mut entries = Vec::new();
        let mut summary = format!("# Report: {}\n\n", config.name);

        for rec in &done {
            let loaded = self.load_run(&rec.id)?;
            let model = &loaded.model;
            let labels = self.labelset_opt(&rec.id)?;
            let k = model.k();
            let mut notes = Vec::new();
            let dir = &rec.id;

            let clouds = (0..k).map(|t| exports::export_wordcloud(model, labels.as_ref(), t, config.cloud_m)).collect::<Result<Vec<_>>>()?;
            bundle.add(format!("{dir}/wordclouds.json"), exports::to_json(&clouds)?);
            bundle.add(format!("{dir}/prevalence.csv"), exports::prevalence_csv(model, labels.as_ref())?);
            bundle.add(format!("{dir}/coherence.csv"), exports::coherence_csv(&loaded.coherence)?);

            let mut tests = Vec::new();
            for key in &config.report_keys {
                if !known.contains(key) {
                    notes.push(format!("tests by `{key}` skipped: unknown key"));
                    continue;
                }
                match self.analyze(&rec.id, key, TestChoice::Auto, None, false) {
                    Ok(mut t) => tests.append(&mut t),
                    Err(e) => notes.push(format!("tests by `{key}` skipped: {}", e.code())),
                }
            }
            bundle.add(format!("{dir}/tests.csv"), exports::tests_csv(&tests)?);

            let trends: Result<Vec<_>> = (0..k).map(|t| self.trend(&rec.id, t, Bin::Year)).collect();
            match trends {
                Ok(tr) => bundle.add(format!("{dir}/trend.csv"), exports::trend_csv(&tr)?),
                Err(e) => notes.push(format!("trend skipped: {}", e.code())),
            }
            if let Some(ls) = &labels {
                bundle.add(format!("{dir}/labels.json"), exports::to_json(ls)?);
            }
            let failed_sweep_ks = rec.sweep.as_ref().map(|s| s.failed.clone()).unwrap_or_default();
            for (fk, code) in &failed_sweep_ks {
                notes.push(format!("sweep candidate K={fk} failed: {code}"));
            }

            let _ = writeln!(summary, "## {} (phase `{}`, assemblage `{}`)\n", rec.id, rec.phase, rec.assemblage);
            let _ = writeln!(summary, "K = {k}, seed = {}, documents = {}", rec.seed, model.n_docs());
            if !rec.feedback_consumed.is_empty() {
                let _ = writeln!(summary, "Stop-word feedback applied: {}", rec.feedback_consumed.join(", "));
            }
            let prevalence = exports::export_prevalence(model);
            let _ = writeln!(summary, "\n| topic | label | prevalence | top words |\n|---|---|---|---|");
            for t in 0..k {
                let label = labels.as_ref().and_then(|l| l.labels.get(&t)).map(String::as_str).unwrap_or("");
                let words = model.top_words(t, 8)?.into_iter().map(|(w, _)| w).collect::<Vec<_>>().join(" ");
                let _ = writeln!(summary, "| {t} | {label} | {} | {words} |", crate::scalar::fmt_significant(prevalence[t], 4));
            }
            for n in &notes {
                let _ = writeln!(summary, "\nNote: {n}");
            }
            summary.push('\n');

            entries.push(RunEntry {
                id: rec.id.clone(),
                phase: rec.phase.clone(),
                assemblage: rec.assemblage.clone(),
                k,
                seed: rec.seed,
                manifest_sha256: rec.manifest_sha256.clone().unwrap_or_default(),
                feedback_consumed: rec.feedback_consumed.clone(),
                labelled: labels.is_some(),
                failed_sweep_ks,
                notes,
            });
        }
        let failed_runs = all
            .iter()
            .filter(|r| r.status == RunStatus::Failed && run.is_none_or(|id| id == r.id))
            .map(|r| {
                let e = r.error.clone();
                FailedRunEntry {
                    id: r.id.clone(),
                    stage: e.as_ref().map(|e| e.stage.clone()).unwrap_or_default(),
                    code: e.map(|e| e.code).unwrap_or_default(),
                }
            })
            .collect();
        bundle.add("summary.md", summary.into_bytes());
        bundle.add("report.json", exports::to_json(&ReportIndex { project: config.name.clone(), runs: entries, failed_runs })?);

        let dir = self.path(&["reports", &format!("report-{}", stamp.format("%Y%m%dT%H%M%SZ"))]);
        let files = bundle.write(&dir)?;
        Ok(ReportSummary { dir, runs: done.iter().map(|r| r.id.clone()).collect(), files })
    }
}
