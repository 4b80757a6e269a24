//! Read-only projections of run state shared by the CLI and the HTTP API.

use serde::Serialize;

use saqd_core::exports::{export_prevalence, export_wordcloud, CloudEntry};
use saqd_core::project::{parse_doc_ref, Project, RunStatus};
use saqd_core::{Error, Result};

pub const SNIPPET_CHARS: usize = 200;

#[derive(Debug, Clone, Serialize)]
pub struct TopicView {
    pub topic: usize,
    pub label: Option<String>,
    /// Ranked by P(W|T), highest first.
    pub words: Vec<CloudEntry<f64>>,
    pub coherence: Option<f64>,
    pub prevalence: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DocView {
    pub doc_id: String,
    pub weight: f64,
    pub snippet: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrevalenceRow {
    pub topic: usize,
    pub label: Option<String>,
    pub mean_weight: f64,
}

/// Most recently created run that finished successfully.
pub fn latest_done_run(project: &Project) -> Result<String> {
    let runs = project.runs()?;
    runs.into_iter().rev().find(|r| r.status == RunStatus::Done).map(|r| r.id).ok_or(Error::NoRuns)
}

pub fn topics(project: &Project, run: &str, n: usize) -> Result<Vec<TopicView>> {
    let loaded = project.load_run(run)?;
    let labels = project.labelset_opt(run)?;
    let model = &loaded.model;
    let per_topic = loaded.coherence.per_k.get(&model.k()).map(|s| s.per_topic.clone());
    let prevalence = export_prevalence(model);
    (0..model.k())
        .map(|t| {
            let cloud = export_wordcloud(model, labels.as_ref(), t, n.max(1))?;
            Ok(TopicView {
                topic: t,
                label: cloud.label,
                words: cloud.entries,
                coherence: per_topic.as_ref().and_then(|p| p.get(t).copied()),
                prevalence: prevalence[t],
            })
        })
        .collect()
}

pub fn topic_docs(project: &Project, run: &str, topic: usize, n: usize) -> Result<Vec<DocView>> {
    let loaded = project.load_run(run)?;
    let store = project.store()?;
    loaded
        .model
        .top_documents(topic, n)?
        .into_iter()
        .map(|(doc_id, weight)| {
            let r = parse_doc_ref(&doc_id)?;
            let text = store.corpora.get(&r.corpus).and_then(|c| c.get(&r.id)).map(|d| d.text.as_str()).unwrap_or("");
            Ok(DocView { snippet: text.chars().take(SNIPPET_CHARS).collect(), doc_id, weight })
        })
        .collect()
}

pub fn prevalence(project: &Project, run: &str) -> Result<Vec<PrevalenceRow>> {
    let loaded = project.load_run(run)?;
    let labels = project.labelset_opt(run)?;
    Ok(export_prevalence(&loaded.model)
        .into_iter()
        .enumerate()
        .map(|(topic, mean_weight)| PrevalenceRow { topic, label: labels.as_ref().and_then(|l| l.labels.get(&topic).cloned()), mean_weight })
        .collect())
}
