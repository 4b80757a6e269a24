//! Pipeline runs: preprocess, optional K sweep, training, coherence, exports.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::Project;
use crate::coherence::{self, CoherenceReport, CooccurrenceTable, KScores, SweepConfig};
use crate::corpus_store::{DocRef, Document};
use crate::error::{Error, Result};
use crate::exports::{self, Bundle, ManifestEntry, MANIFEST};
use crate::interpretation::merge_feedback;
use crate::preprocess::{self, DocTermMatrix, PreprocessConfig};
use crate::provenance::{json_hash, sha256_hex};
use crate::topic_engine::{self, artifact, TopicModel, TrainConfig};

pub(super) const RUN_FILE: &str = "run.json";
pub(super) const ARTIFACTS_DIR: &str = "artifacts";
const MODEL_DIR: &str = "model";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Queued,
    Running,
    Done,
    Failed,
}

/// Per-run changes to the phase's configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOverrides {
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub sweep_ks: Option<Vec<usize>>,
    /// Feedback record ids whose stop words join this run's stoplist.
    pub apply_feedback: Vec<String>,
    /// Worker threads; output does not depend on it.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHashes {
    pub corpus: String,
    pub stoplist: String,
    pub preprocess_config: String,
    pub train_config: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunError {
    pub stage: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub documents: usize,
    pub empty_documents: usize,
    pub terms: usize,
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub ks: Vec<usize>,
    pub means: BTreeMap<usize, f64>,
    pub recommended_k: Option<usize>,
    /// K → error code for candidates that failed to train.
    pub failed: BTreeMap<usize, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub phase: String,
    pub assemblage: String,
    pub status: RunStatus,
    pub seed: u64,
    /// Final number of topics; set once known.
    pub k: Option<usize>,
    pub inputs: InputHashes,
    pub preprocess: PreprocessConfig,
    /// Configuration of the final model (after a sweep, its K and derived seed).
    pub train: TrainConfig,
    pub sweep: Option<SweepSummary>,
    pub overrides: RunOverrides,
    pub feedback_consumed: Vec<String>,
    pub stoplist_added: BTreeSet<String>,
    /// Runs whose interpretation produced the consumed feedback.
    pub parent_runs: Vec<String>,
    pub stats: Option<RunStats>,
    pub selected_chain: Option<usize>,
    pub artifacts: Vec<ManifestEntry>,
    pub manifest_sha256: Option<String>,
    pub error: Option<RunError>,
    pub created_at: DateTime<Utc>,
    pub started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
}

/// A finished run with its model in memory.
#[derive(Debug)]
pub struct LoadedRun {
    pub record: RunRecord,
    pub model: TopicModel<f64>,
    pub dtm: DocTermMatrix,
    pub coherence: CoherenceReport<f64>,
}

pub(super) fn load(artifacts: &Path, record: RunRecord) -> Result<LoadedRun> {
    exports::verify_manifest(artifacts)?;
    let (model, dtm) = artifact::read_model(&artifacts.join(MODEL_DIR), record.train.clone(), record.selected_chain.unwrap_or(0))?;
    let coherence = super::read_json(&artifacts.join("coherence.json"))?;
    Ok(LoadedRun { record, model, dtm, coherence })
}

struct Outputs {
    bundle: Bundle,
    k: usize,
    train: TrainConfig,
    sweep: Option<SweepSummary>,
    stats: RunStats,
    selected_chain: usize,
}

fn corpus_hash(members: &[(DocRef, &Document)]) -> String {
    let docs: Vec<(String, &Document)> = members.iter().map(|(r, d)| (r.to_string(), *d)).collect();
    json_hash(&docs)
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(Error::stage(name))
}

/// The whole pipeline for resolved members; everything it produces is in the bundle.
fn execute(members: &[(DocRef, &Document)], rec: &RunRecord, sweep_ks: &[usize], top_m: usize, cloud_m: usize) -> Result<Outputs> {
    let mut bundle = Bundle::default();

    let dtm = stage("preprocess", (|| {
        if members.is_empty() {
            return Err(Error::EmptyInput);
        }
        let tokens: Vec<Vec<String>> = members.iter().map(|(_, d)| preprocess::tokenize(&d.text, &rec.preprocess)).collect();
        let vocab = Arc::new(preprocess::build_vocabulary(&tokens, &rec.preprocess)?);
        let ids = members.iter().map(|(r, _)| r.to_string()).collect();
        preprocess::vectorize(ids, &tokens, vocab)
    })())?;
    bundle.add("preprocess/config.json", exports::to_json(&rec.preprocess.effective())?);
    bundle.add("preprocess/stoplist.txt", rec.preprocess.stoplist_text().into_bytes());
    let stats = RunStats { documents: dtm.n_docs(), empty_documents: dtm.empty_rows().len(), terms: dtm.n_terms(), tokens: dtm.token_total };

    let (model, report, sweep) = if sweep_ks.is_empty() {
        let model: TopicModel = stage("train", topic_engine::train_lda(&dtm, &rec.train))?;
        let report = stage("coherence", (|| {
            let table = CooccurrenceTable::build(&dtm);
            let per_topic = coherence::topic_coherences(&model, &table, top_m.min(dtm.n_terms()))?;
            let mean = per_topic.iter().sum::<f64>() / per_topic.len() as f64;
            let k = model.k();
            Ok(CoherenceReport {
                per_k: BTreeMap::from([(k, KScores { per_topic, mean, seed: rec.train.seed })]),
                failed: BTreeMap::new(),
                recommended_k: Some(k),
                sweep_config: SweepConfig { template: rec.train.clone(), ks: vec![k], top_m },
            })
        })())?;
        (model, report, None)
    } else {
        let (report, mut models) = stage("sweep", coherence::sweep_k_with_models::<f64>(&dtm, sweep_ks, &rec.train, top_m))?;
        let summary = SweepSummary {
            ks: report.sweep_config.ks.clone(),
            means: report.per_k.iter().map(|(&k, s)| (k, s.mean)).collect(),
            recommended_k: report.recommended_k,
            failed: report.failed.iter().map(|(&k, f)| (k, f.code.clone())).collect(),
        };
        let Some(best) = report.recommended_k else {
            let detail = report.failed.iter().map(|(k, f)| format!("K={k}: {}", f.message)).collect::<Vec<_>>().join("; ");
            return Err(Error::stage("sweep")(Error::InvalidConfig(format!("every K candidate failed ({detail})"))));
        };
        let model = models.remove(&best).expect("recommended K has a model");
        bundle.add("sweep/coherence.csv", exports::coherence_csv(&report)?);
        (model, report, Some(summary))
    };
    let k = model.k();

    stage("exports", (|| {
        for (name, bytes) in artifact::model_files(&model, &dtm) {
            bundle.add(format!("{MODEL_DIR}/{name}"), bytes);
        }
        let manifest = serde_json::json!({
            "config": model.config,
            "seed": model.config.seed,
            "dtm_sha256": model.dtm_hash,
            "vocab_sha256": model.vocab_hash,
            "selected_chain": model.selected_chain,
        });
        bundle.add("model/manifest.json", exports::to_json(&manifest)?);
        bundle.add("coherence.json", exports::to_json(&report)?);
        bundle.add("coherence.csv", exports::coherence_csv(&report)?);
        bundle.add("exports/prevalence.csv", exports::prevalence_csv(&model, None)?);
        let clouds = (0..k).map(|t| exports::export_wordcloud(&model, None, t, cloud_m)).collect::<Result<Vec<_>>>()?;
        bundle.add("exports/wordclouds.json", exports::to_json(&clouds)?);
        Ok(())
    })())?;

    Ok(Outputs { bundle, k, train: model.config.clone(), sweep, stats, selected_chain: model.selected_chain })
}

impl Project {
    /// Resolves configuration for a new run and records it as queued.
    pub fn create_run(&self, phase: Option<&str>, assemblage: Option<&str>, overrides: &RunOverrides) -> Result<RunRecord> {
        let phase = self.resolve_phase(phase, assemblage)?;
        let config = self.config();
        let base_pre = config.preprocess.get(&phase.preprocess).cloned().ok_or_else(|| Error::InvalidConfig(format!("unknown preprocess config `{}`", phase.preprocess)))?;
        let mut train = config.train.get(&phase.train).cloned().ok_or_else(|| Error::InvalidConfig(format!("unknown train config `{}`", phase.train)))?;
        let o = overrides;
        if let Some(k) = o.k {
            train.k = k;
        }
        if let Some(a) = o.alpha {
            train.alpha = a;
        }
        if let Some(b) = o.beta {
            train.beta = b;
        }
        if let Some(i) = o.iterations {
            train.iterations = i;
            if o.burn_in.is_none() && train.burn_in >= i {
                train.burn_in = i / 2;
            }
        }
        if let Some(b) = o.burn_in {
            train.burn_in = b;
        }
        if let Some(s) = o.seed {
            train.seed = s;
        }
        if let Some(c) = o.chains {
            train.chains = c;
        }
        if o.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be >= 1".into()));
        }
        let sweep_ks = o.sweep_ks.clone().unwrap_or_else(|| phase.sweep_ks.clone());
        if sweep_ks.is_empty() {
            train.validate()?;
        } else {
            TrainConfig { k: 2, ..train.clone() }.validate()?;
        }

        let mut feedback_ids: Vec<String> = o.apply_feedback.clone();
        feedback_ids.sort();
        feedback_ids.dedup();
        let records = feedback_ids.iter().map(|id| self.feedback(id)).collect::<Result<Vec<_>>>()?;
        let words = merge_feedback(&records);
        let added: BTreeSet<String> = words.difference(&base_pre.stoplist).cloned().collect();
        let pre = base_pre.extend_stoplist(&words, "pipeline", &format!("feedback {}", feedback_ids.join(",")));
        pre.validate()?;
        let mut parents: Vec<String> = records.iter().map(|r| r.run_ref.clone()).collect();
        parents.sort();
        parents.dedup();

        let id = super::next_id(&self.run_ids()?, "run-");
        let rec = RunRecord {
            id,
            phase: phase.name.clone(),
            assemblage: phase.assemblage.clone(),
            status: RunStatus::Queued,
            seed: train.seed,
            k: sweep_ks.is_empty().then_some(train.k),
            inputs: InputHashes {
                corpus: String::new(),
                stoplist: sha256_hex(pre.stoplist_text().as_bytes()),
                preprocess_config: json_hash(&pre.effective()),
                train_config: json_hash(&(&train, &sweep_ks)),
            },
            preprocess: pre,
            train,
            sweep: (!sweep_ks.is_empty()).then(|| SweepSummary { ks: sweep_ks, means: BTreeMap::new(), recommended_k: None, failed: BTreeMap::new() }),
            overrides: overrides.clone(),
            feedback_consumed: feedback_ids,
            stoplist_added: added,
            parent_runs: parents,
            stats: None,
            selected_chain: None,
            artifacts: Vec::new(),
            manifest_sha256: None,
            error: None,
            created_at: Utc::now(),
            started_at: None,
            finished_at: None,
        };
        self.save_run(&rec)?;
        Ok(rec)
    }

    /// Executes a queued run. A failing stage marks the run failed and leaves
    /// no artifacts behind; the returned record reflects either outcome.
    pub fn execute_run(&self, id: &str) -> Result<RunRecord> {
        let _lock = self.run_lock()?;
        self.execute_locked(id)
    }

    fn execute_locked(&self, id: &str) -> Result<RunRecord> {
        let mut rec = self.run(id)?;
        if rec.status != RunStatus::Queued {
            return Err(Error::InvalidConfig(format!("run `{id}` is {:?}, not queued", rec.status)));
        }
        rec.status = RunStatus::Running;
        rec.started_at = Some(Utc::now());
        self.save_run(&rec)?;

        let artifacts = self.artifacts_dir(id);
        let outcome = self.execute_inner(&mut rec).and_then(|out| {
            let manifest = out.bundle.write(&artifacts)?;
            Ok((out, manifest))
        });
        rec.finished_at = Some(Utc::now());
        match outcome {
            Ok((out, manifest)) => {
                rec.status = RunStatus::Done;
                rec.k = Some(out.k);
                rec.train = out.train;
                rec.sweep = out.sweep;
                rec.stats = Some(out.stats);
                rec.selected_chain = Some(out.selected_chain);
                rec.manifest_sha256 = Some(sha256_hex(&std::fs::read(artifacts.join(MANIFEST))?));
                rec.artifacts = manifest;
            }
            Err(e) => {
                if artifacts.exists() {
                    std::fs::remove_dir_all(&artifacts)?;
                }
                let stage = match &e {
                    Error::StageFailed { stage, .. } => stage.to_string(),
                    _ => "setup".to_string(),
                };
                let message = match &e {
                    Error::StageFailed { source, .. } => source.to_string(),
                    other => other.to_string(),
                };
                rec.status = RunStatus::Failed;
                rec.error = Some(RunError { stage, code: e.code().to_string(), message });
            }
        }
        self.save_run(&rec)?;
        Ok(rec)
    }

    fn execute_inner(&self, rec: &mut RunRecord) -> Result<Outputs> {
        let store = self.store()?;
        let members = stage("preprocess", store.resolve(&rec.assemblage))?;
        rec.inputs.corpus = corpus_hash(&members);
        let sweep_ks = rec.sweep.as_ref().map(|s| s.ks.clone()).unwrap_or_default();
        let config = self.config();
        let job = || execute(&members, rec, &sweep_ks, config.top_m, config.cloud_m);
        match rec.overrides.threads {
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| Error::InvalidConfig(e.to_string()))?;
                pool.install(job)
            }
            None => job(),
        }
    }

    /// Exclusive lock on `runs/.lock`, held while a run executes. The OS drops
    /// it if the process dies, so a crashed run never blocks later ones.
    fn run_lock(&self) -> Result<fs::File> {
        let file = fs::OpenOptions::new().create(true).truncate(false).write(true).open(self.root().join("runs").join(".lock"))?;
        match file.try_lock() {
            Ok(()) => Ok(file),
            Err(fs::TryLockError::WouldBlock) => Err(Error::RunInProgress),
            Err(fs::TryLockError::Error(e)) => Err(e.into()),
        }
    }

    /// Creates and executes a run in one call.
    pub fn run_pipeline(&self, phase: Option<&str>, assemblage: Option<&str>, overrides: &RunOverrides) -> Result<RunRecord> {
        let _lock = self.run_lock()?;
        let rec = self.create_run(phase, assemblage, overrides)?;
        self.execute_locked(&rec.id)
    }

    /// Runs left queued or running by an interrupted process are marked failed.
    pub fn recover_interrupted(&self) -> Result<Vec<String>> {
        let _lock = self.run_lock()?;
        let mut fixed = Vec::new();
        for mut rec in self.runs()? {
            if rec.status == RunStatus::Running {
                let artifacts = self.artifacts_dir(&rec.id);
                if artifacts.exists() {
                    std::fs::remove_dir_all(&artifacts)?;
                }
                rec.status = RunStatus::Failed;
                rec.finished_at = Some(Utc::now());
                rec.error = Some(RunError { stage: "setup".into(), code: "INTERRUPTED".into(), message: "process stopped during the run".into() });
                self.save_run(&rec)?;
                fixed.push(rec.id);
            }
        }
        Ok(fixed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_reject_unknown_fields() {
        assert!(serde_json::from_str::<RunOverrides>(r#"{"k": 3, "bogus": 1}"#).is_err());
        let o: RunOverrides = serde_json::from_str(r#"{"k": 3, "apply_feedback": ["fb-1"]}"#).unwrap();
        assert_eq!(o.k, Some(3));
    }
}
