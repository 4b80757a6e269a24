//! A project directory: corpora, assemblages, runs, sessions and reports.
//!
//! ```text
//! project.json
//! corpora/<name>.jsonl
//! assemblages/<name>.json
//! fit/<assemblage>.json
//! runs/run-NNNN/run.json
//! runs/run-NNNN/artifacts/...
//! sessions/<id>.json
//! labels/<run>.json
//! feedback/<id>.json
//! reports/report-<timestamp>/
//! ```

mod report;
mod run;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use report::ReportSummary;
pub use run::{InputHashes, LoadedRun, RunError, RunOverrides, RunRecord, RunStats, RunStatus, SweepSummary};

use crate::comparative::{self, Bin, GroupTest, TestChoice, TopicMatch, Trend};
use crate::corpus_store::{Assemblage, CorpusStore, DocRef, Document, FitReport, FitThresholds, IngestReport, Response, Warning};
use crate::error::{Error, Result};
use crate::interpretation::{Agreement, CodingSession, FeedbackRecord, LabelSet, TopicStatus};
use crate::preprocess::PreprocessConfig;
use crate::topic_engine::TrainConfig;

pub const PROJECT_FILE: &str = "project.json";
pub const DEFAULT_CONFIG: &str = "default";

/// A named stage of a multi-phase design, bound to one assemblage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub assemblage: String,
    #[serde(default = "default_ref")]
    pub preprocess: String,
    #[serde(default = "default_ref")]
    pub train: String,
    /// Candidate K values; empty means train at the configured K.
    #[serde(default)]
    pub sweep_ks: Vec<usize>,
}

fn default_ref() -> String {
    DEFAULT_CONFIG.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectConfig {
    pub name: String,
    pub preprocess: BTreeMap<String, PreprocessConfig>,
    pub train: BTreeMap<String, TrainConfig>,
    pub phases: Vec<Phase>,
    /// Top words per topic used for coherence.
    pub top_m: usize,
    /// Entries per word cloud.
    pub cloud_m: usize,
    /// Metadata keys tested in report bundles.
    pub report_keys: Vec<String>,
    #[serde(default)]
    pub corpus_notes: BTreeMap<String, String>,
}

impl ProjectConfig {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            preprocess: BTreeMap::from([(DEFAULT_CONFIG.to_string(), PreprocessConfig::default())]),
            train: BTreeMap::from([(DEFAULT_CONFIG.to_string(), TrainConfig::with_k(10))]),
            phases: Vec::new(),
            top_m: crate::coherence::DEFAULT_TOP_M,
            cloud_m: 30,
            report_keys: vec!["context".into(), "source_study".into()],
            corpus_notes: BTreeMap::new(),
        }
    }

    pub fn phase(&self, name: &str) -> Result<&Phase> {
        self.phases.iter().find(|p| p.name == name).ok_or_else(|| Error::UnknownPhase(name.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for p in &self.phases {
            if !names.insert(&p.name) {
                return Err(Error::InvalidConfig(format!("duplicate phase `{}`", p.name)));
            }
            if !self.preprocess.contains_key(&p.preprocess) {
                return Err(Error::InvalidConfig(format!("phase `{}` references unknown preprocess config `{}`", p.name, p.preprocess)));
            }
            if !self.train.contains_key(&p.train) {
                return Err(Error::InvalidConfig(format!("phase `{}` references unknown train config `{}`", p.name, p.train)));
            }
        }
        for c in self.preprocess.values() {
            c.validate()?;
        }
        for c in self.train.values() {
            c.validate()?;
        }
        if self.top_m < 2 || self.cloud_m < 1 {
            return Err(Error::InvalidConfig("top_m must be >= 2 and cloud_m >= 1".into()));
        }
        Ok(())
    }
}

/// Writes via a sibling temp file and rename so readers never see partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("file");
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write_atomic(path, &crate::exports::to_json(value)?)
}

fn read_json<D: DeserializeOwned>(path: &Path) -> Result<D> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::CorruptArtifact(path.display().to_string(), e.to_string()))
}

/// File stems in `dir` with the given extension, sorted.
fn list_stems(dir: &Path, ext: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                if !stem.starts_with('.') {
                    out.push(stem.to_string());
                }
            }
        }
    }
    out.sort();
    Ok(out)
}

fn next_id(existing: &[String], prefix: &str) -> String {
    let n = existing.iter().filter_map(|s| s.strip_prefix(prefix)?.parse::<usize>().ok()).max().unwrap_or(0);
    format!("{prefix}{:04}", n + 1)
}

/// Splits a model document id `corpus/id` back into a reference.
pub fn parse_doc_ref(s: &str) -> Result<DocRef> {
    let (c, id) = s.split_once('/').ok_or_else(|| Error::CorruptArtifact("doc_ids".into(), format!("bad id `{s}`")))?;
    Ok(DocRef::new(c, id))
}

pub struct Project {
    root: PathBuf,
    config: Mutex<ProjectConfig>,
    cache: Mutex<HashMap<String, Arc<LoadedRun>>>,
}

impl Project {
    pub fn init(root: &Path, name: Option<&str>) -> Result<Self> {
        if root.join(PROJECT_FILE).exists() {
            return Err(Error::ProjectExists(root.to_path_buf()));
        }
        let name = match name {
            Some(n) => n.to_string(),
            None => root.file_name().and_then(|s| s.to_str()).unwrap_or("project").to_string(),
        };
        let config = ProjectConfig::new(&name);
        for sub in ["corpora", "assemblages", "fit", "runs", "sessions", "labels", "feedback", "reports"] {
            fs::create_dir_all(root.join(sub))?;
        }
        write_json(&root.join(PROJECT_FILE), &config)?;
        Self::open(root)
    }

    pub fn open(root: &Path) -> Result<Self> {
        let file = root.join(PROJECT_FILE);
        if !file.is_file() {
            return Err(Error::UnknownProject(root.to_path_buf()));
        }
        let config: ProjectConfig = read_json(&file)?;
        Ok(Self { root: root.to_path_buf(), config: Mutex::new(config), cache: Mutex::new(HashMap::new()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> ProjectConfig {
        self.config.lock().expect("config lock").clone()
    }

    /// Applies `f` to the configuration and persists it if the result validates.
    pub fn update_config<F: FnOnce(&mut ProjectConfig) -> Result<()>>(&self, f: F) -> Result<ProjectConfig> {
        let mut guard = self.config.lock().expect("config lock");
        let mut next = guard.clone();
        f(&mut next)?;
        next.validate()?;
        write_json(&self.root.join(PROJECT_FILE), &next)?;
        *guard = next.clone();
        Ok(next)
    }

    fn path(&self, parts: &[&str]) -> PathBuf {
        parts.iter().fold(self.root.clone(), |p, s| p.join(s))
    }

    // corpora and assemblages

    /// Loads every corpus, assemblage and fit report from disk.
    pub fn store(&self) -> Result<CorpusStore> {
        let mut store = CorpusStore::new();
        let notes = self.config().corpus_notes;
        for name in list_stems(&self.path(&["corpora"]), "jsonl")? {
            let file = fs::File::open(self.path(&["corpora", &format!("{name}.jsonl")]))?;
            let report = store.ingest(&name, std::io::BufReader::new(file), false)?;
            if report.rejected > 0 {
                return Err(Error::CorruptArtifact(format!("corpora/{name}.jsonl"), format!("{} invalid records", report.rejected)));
            }
            if let (Some(c), Some(n)) = (store.corpora.get_mut(&name), notes.get(&name)) {
                c.origin_note = n.clone();
            }
        }
        for name in list_stems(&self.path(&["assemblages"]), "json")? {
            let a: Assemblage = read_json(&self.path(&["assemblages", &format!("{name}.json")]))?;
            store.assemblages.insert(name, a);
        }
        for name in list_stems(&self.path(&["fit"]), "json")? {
            let f: FitReport = read_json(&self.path(&["fit", &format!("{name}.json")]))?;
            store.fits.insert(name, f);
        }
        Ok(store)
    }

    pub fn ingest<R: BufRead>(&self, corpus: &str, source: R, append: bool, origin_note: Option<&str>) -> Result<IngestReport> {
        let mut store = self.store()?;
        let report = store.ingest(corpus, source, append)?;
        write_atomic(&self.path(&["corpora", &format!("{corpus}.jsonl")]), store.corpora[corpus].to_jsonl().as_bytes())?;
        if let Some(note) = origin_note {
            self.update_config(|c| {
                c.corpus_notes.insert(corpus.to_string(), note.to_string());
                Ok(())
            })?;
        }
        Ok(report)
    }

    /// Creates or replaces an assemblage. `corpora` empty means every corpus.
    pub fn create_assemblage(&self, name: &str, corpora: &[String], filter: &str) -> Result<(Assemblage, Vec<Warning>)> {
        let mut store = self.store()?;
        let corpora: Vec<String> = if corpora.is_empty() { store.corpora.keys().cloned().collect() } else { corpora.to_vec() };
        let (a, warnings) = store.create_assemblage(name, &corpora, filter)?;
        write_json(&self.path(&["assemblages", &format!("{name}.json")]), &a)?;
        Ok((a, warnings))
    }

    pub fn assemblages(&self) -> Result<Vec<Assemblage>> {
        Ok(self.store()?.assemblages.into_values().collect())
    }

    pub fn assess_fit(&self, assemblage: &str, responses: &BTreeMap<String, Response>, thresholds: &FitThresholds) -> Result<FitReport> {
        let mut store = self.store()?;
        let report = store.assess_fit(assemblage, responses, thresholds)?;
        write_json(&self.path(&["fit", &format!("{assemblage}.json")]), &report)?;
        Ok(report)
    }

    pub fn fit(&self, assemblage: &str) -> Result<FitReport> {
        let mut store = self.store()?;
        store.assemblage(assemblage)?;
        store.fits.remove(assemblage).ok_or_else(|| Error::UnknownAssemblage(format!("{assemblage} has no fit assessment")))
    }

    // phases

    pub fn add_phase(&self, phase: Phase) -> Result<Phase> {
        crate::corpus_store::validate_name(&phase.name)?;
        self.store()?.assemblage(&phase.assemblage)?;
        self.update_config(|c| {
            c.phases.retain(|p| p.name != phase.name);
            c.phases.push(phase.clone());
            Ok(())
        })?;
        Ok(phase)
    }

    /// The phase named `name`, or a phase named after `assemblage` that is
    /// created with default configs on first use.
    pub fn resolve_phase(&self, name: Option<&str>, assemblage: Option<&str>) -> Result<Phase> {
        let config = self.config();
        match (name, assemblage) {
            (Some(n), _) => config.phase(n).cloned(),
            (None, Some(a)) => match config.phase(a) {
                Ok(p) => Ok(p.clone()),
                Err(_) => self.add_phase(Phase { name: a.to_string(), assemblage: a.to_string(), preprocess: default_ref(), train: default_ref(), sweep_ks: Vec::new() }),
            },
            (None, None) if config.phases.len() == 1 => Ok(config.phases[0].clone()),
            (None, None) => Err(Error::UnknownPhase("(none given and the project does not have exactly one phase)".into())),
        }
    }

    // runs

    pub fn run_ids(&self) -> Result<Vec<String>> {
        let dir = self.path(&["runs"]);
        let mut ids = Vec::new();
        if dir.exists() {
            for entry in fs::read_dir(&dir)? {
                let entry = entry?;
                let name = entry.file_name().to_string_lossy().into_owned();
                if name.starts_with("run-") && entry.path().join(run::RUN_FILE).is_file() {
                    ids.push(name);
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    pub fn runs(&self) -> Result<Vec<RunRecord>> {
        self.run_ids()?.iter().map(|id| self.run(id)).collect()
    }

    pub fn run(&self, id: &str) -> Result<RunRecord> {
        let file = self.path(&["runs", id, run::RUN_FILE]);
        if !file.is_file() {
            return Err(Error::UnknownRun(id.to_string()));
        }
        read_json(&file)
    }

    fn save_run(&self, rec: &RunRecord) -> Result<()> {
        write_json(&self.path(&["runs", &rec.id, run::RUN_FILE]), rec)
    }

    pub fn artifacts_dir(&self, run: &str) -> PathBuf {
        self.path(&["runs", run, run::ARTIFACTS_DIR])
    }

    /// Loads a finished run's model, cached across calls.
    pub fn load_run(&self, id: &str) -> Result<Arc<LoadedRun>> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(id) {
            return Ok(hit.clone());
        }
        let rec = self.run(id)?;
        if rec.status != RunStatus::Done {
            return Err(Error::RunNotDone(id.to_string()));
        }
        let loaded = Arc::new(run::load(&self.artifacts_dir(id), rec)?);
        self.cache.lock().expect("cache lock").insert(id.to_string(), loaded.clone());
        Ok(loaded)
    }

    /// The run's documents looked up in the current store, in model order.
    fn with_members<R>(&self, loaded: &LoadedRun, f: impl FnOnce(&[(DocRef, &Document)]) -> Result<R>) -> Result<R> {
        let store = self.store()?;
        let members = loaded
            .model
            .doc_ids
            .iter()
            .map(|s| {
                let r = parse_doc_ref(s)?;
                let d = store.corpora.get(&r.corpus).and_then(|c| c.get(&r.id)).ok_or_else(|| Error::ModelMismatch(format!("document {s} is no longer in the store")))?;
                Ok((r, d))
            })
            .collect::<Result<Vec<_>>>()?;
        f(&members)
    }

    /// Group tests of topic weights by `key`, for one topic or all of them.
    pub fn analyze(&self, run: &str, key: &str, choice: TestChoice, topic: Option<usize>, bonferroni: bool) -> Result<Vec<GroupTest<f64>>> {
        let loaded = self.load_run(run)?;
        if !self.store()?.known_keys().contains(key) {
            return Err(Error::UnknownKey(key.to_string()));
        }
        let topics: Vec<usize> = match topic {
            Some(t) => vec![t],
            None => (0..loaded.model.k()).collect(),
        };
        let family = if bonferroni { topics.len() } else { 0 };
        self.with_members(&loaded, |members| {
            topics
                .iter()
                .map(|&t| comparative::test_groups(&comparative::group_topic_weights(&loaded.model, members, key, t)?, choice, family))
                .collect()
        })
    }

    pub fn group_weights(&self, run: &str, key: &str, topic: usize) -> Result<comparative::GroupedWeights<f64>> {
        let loaded = self.load_run(run)?;
        self.with_members(&loaded, |members| comparative::group_topic_weights(&loaded.model, members, key, topic))
    }

    pub fn trend(&self, run: &str, topic: usize, bin: Bin) -> Result<Trend<f64>> {
        let loaded = self.load_run(run)?;
        self.with_members(&loaded, |members| comparative::topic_trend(&loaded.model, members, topic, bin))
    }

    pub fn compare(&self, run_a: &str, run_b: &str) -> Result<TopicMatch<f64>> {
        let a = self.load_run(run_a)?;
        let b = self.load_run(run_b)?;
        comparative::match_topics(&a.model, &b.model)
    }

    // interpretation

    fn session_path(&self, id: &str) -> PathBuf {
        self.path(&["sessions", &format!("{id}.json")])
    }

    pub fn sessions(&self) -> Result<Vec<CodingSession>> {
        list_stems(&self.path(&["sessions"]), "json")?.iter().map(|id| self.session(id)).collect()
    }

    pub fn session(&self, id: &str) -> Result<CodingSession> {
        let path = self.session_path(id);
        if !path.is_file() {
            return Err(Error::UnknownSession(id.to_string()));
        }
        let stored: CodingSession = read_json(&path)?;
        let replayed = CodingSession::replay(id, &stored.audit)?;
        if replayed != stored {
            return Err(Error::CorruptArtifact(format!("sessions/{id}.json"), "state differs from audit replay".into()));
        }
        Ok(stored)
    }

    fn save_session(&self, s: &CodingSession) -> Result<()> {
        write_json(&self.session_path(&s.id), s)
    }

    pub fn open_session(&self, run: &str, coders: &[String], actor: &str, at: DateTime<Utc>) -> Result<CodingSession> {
        let rec = self.run(run)?;
        let k = match (rec.status, rec.k) {
            (RunStatus::Done, Some(k)) => k,
            _ => return Err(Error::RunNotDone(run.to_string())),
        };
        let id = next_id(&list_stems(&self.path(&["sessions"]), "json")?, "s-");
        let s = CodingSession::open(id, run, k, coders, actor, at)?;
        self.save_session(&s)?;
        Ok(s)
    }

    pub fn submit_label(&self, session: &str, coder: &str, topic: usize, label: &str, at: DateTime<Utc>) -> Result<(CodingSession, TopicStatus)> {
        let mut s = self.session(session)?;
        let status = s.submit_label(coder, topic, label, at)?;
        self.save_session(&s)?;
        Ok((s, status))
    }

    pub fn agreement(&self, session: &str) -> Result<Agreement> {
        Ok(self.session(session)?.compute_agreement())
    }

    pub fn flag_stopwords(&self, session: &str, words: &BTreeSet<String>, note: &str, actor: &str, at: DateTime<Utc>) -> Result<Option<FeedbackRecord>> {
        let mut s = self.session(session)?;
        let record = s.flag_stopwords(words, note, actor, at)?;
        if let Some(r) = &record {
            write_json(&self.path(&["feedback", &format!("{}.json", r.id)]), r)?;
            self.save_session(&s)?;
        }
        Ok(record)
    }

    pub fn feedback(&self, id: &str) -> Result<FeedbackRecord> {
        let path = self.path(&["feedback", &format!("{id}.json")]);
        if !path.is_file() {
            return Err(Error::UnknownFeedback(id.to_string()));
        }
        read_json(&path)
    }

    pub fn feedback_records(&self) -> Result<Vec<FeedbackRecord>> {
        list_stems(&self.path(&["feedback"]), "json")?.iter().map(|id| self.feedback(id)).collect()
    }

    pub fn finalize_labels(&self, session: &str, resolutions: &BTreeMap<usize, String>, actor: &str, auditor: Option<(&str, &str)>, at: DateTime<Utc>) -> Result<LabelSet> {
        let mut s = self.session(session)?;
        let ls = s.finalize_labels(resolutions, actor, auditor, at)?;
        write_json(&self.path(&["labels", &format!("{}.json", ls.run_ref)]), &ls)?;
        self.save_session(&s)?;
        Ok(ls)
    }

    pub fn labelset(&self, run: &str) -> Result<LabelSet> {
        let path = self.path(&["labels", &format!("{run}.json")]);
        if !path.is_file() {
            return Err(Error::UnknownLabelSet(run.to_string()));
        }
        read_json(&path)
    }

    pub fn labelset_opt(&self, run: &str) -> Result<Option<LabelSet>> {
        match self.labelset(run) {
            Ok(l) => Ok(Some(l)),
            Err(Error::UnknownLabelSet(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn group_categories(&self, run: &str, grouping: &BTreeMap<String, BTreeSet<usize>>) -> Result<LabelSet> {
        let next = self.labelset(run)?.group_categories(grouping)?;
        write_json(&self.path(&["labels", &format!("{run}.json")]), &next)?;
        Ok(next)
    }
}
