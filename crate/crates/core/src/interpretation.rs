//! Topic labelling sessions, consensus, categories and stop-word feedback.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicStatus {
    Open,
    Consensus,
    Disputed,
}

/// Trim, case-fold and collapse internal whitespace.
pub fn normalize_label(label: &str) -> String {
    label.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

fn tidy_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Status of one topic given every enrolled coder and the labels submitted for it.
pub fn topic_status(coders: &[String], labels: &BTreeMap<String, String>) -> TopicStatus {
    if coders.iter().any(|c| !labels.contains_key(c)) {
        return TopicStatus::Open;
    }
    let mut normalized = coders.iter().map(|c| normalize_label(&labels[c]));
    let first = normalized.next();
    if normalized.all(|l| Some(&l) == first.as_ref()) {
        TopicStatus::Consensus
    } else {
        TopicStatus::Disputed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Opened { run_ref: String, k: usize, coders: Vec<String> },
    LabelSubmitted { topic: usize, label: String },
    StopwordsFlagged { record: String, words: BTreeSet<String> },
    Resolved { topic: usize, label: String },
    SignedOff { note: String },
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: usize,
    pub at: DateTime<Utc>,
    pub actor: String,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingSession {
    pub id: String,
    pub run_ref: String,
    pub k: usize,
    pub coders: Vec<String>,
    /// topic → coder → label
    pub labels: BTreeMap<usize, BTreeMap<String, String>>,
    pub status: Vec<TopicStatus>,
    pub closed: bool,
    pub audit: Vec<AuditEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub fully_labeled: usize,
    pub consensus: usize,
    /// None when no topic is fully labelled.
    pub fraction: Option<f64>,
}

/// Stop words flagged during interpretation, applied only when a later run cites it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub id: String,
    pub session: String,
    pub run_ref: String,
    pub words: BTreeSet<String>,
    pub note: String,
    pub actor: String,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignOff {
    pub auditor: String,
    pub at: DateTime<Utc>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSet {
    pub run_ref: String,
    pub session: String,
    pub k: usize,
    pub labels: BTreeMap<usize, String>,
    /// Topics whose label came from a manual resolution.
    pub resolved: BTreeSet<usize>,
    pub categories: BTreeMap<String, BTreeSet<usize>>,
    pub sign_off: Option<SignOff>,
}

impl CodingSession {
    pub fn open(id: impl Into<String>, run_ref: impl Into<String>, k: usize, coders: &[String], actor: &str, at: DateTime<Utc>) -> Result<Self> {
        let mut session = Self {
            id: id.into(),
            run_ref: String::new(),
            k: 0,
            coders: Vec::new(),
            labels: BTreeMap::new(),
            status: Vec::new(),
            closed: false,
            audit: Vec::new(),
        };
        let action = Action::Opened { run_ref: run_ref.into(), k, coders: coders.to_vec() };
        session.apply(actor, at, action)?;
        Ok(session)
    }

    /// Rebuilds a session from its audit trail.
    pub fn replay(id: impl Into<String>, audit: &[AuditEvent]) -> Result<Self> {
        let mut events = audit.iter();
        let first = events.next().ok_or_else(|| Error::CorruptArtifact("session".into(), "empty audit".into()))?;
        let Action::Opened { run_ref, k, coders } = &first.action else {
            return Err(Error::CorruptArtifact("session".into(), "audit does not start with opened".into()));
        };
        let mut s = Self::open(id, run_ref.clone(), *k, coders, &first.actor, first.at)?;
        for e in events {
            s.apply(&e.actor, e.at, e.action.clone())?;
        }
        Ok(s)
    }

    fn ensure_open(&self) -> Result<()> {
        if self.closed {
            return Err(Error::SessionClosed(self.id.clone()));
        }
        Ok(())
    }

    fn check_topic(&self, topic: usize) -> Result<()> {
        if topic >= self.k {
            return Err(Error::BadTopic { topic, k: self.k });
        }
        Ok(())
    }

    /// Validates and applies one action, appending it to the audit.
    fn apply(&mut self, actor: &str, at: DateTime<Utc>, action: Action) -> Result<()> {
        match &action {
            Action::Opened { run_ref, k, coders } => {
                if !self.audit.is_empty() {
                    return Err(Error::CorruptArtifact("session".into(), "opened twice".into()));
                }
                if coders.is_empty() {
                    return Err(Error::NoCoders);
                }
                let mut seen = BTreeSet::new();
                let coders: Vec<String> = coders.iter().map(|c| c.trim().to_string()).filter(|c| !c.is_empty() && seen.insert(c.clone())).collect();
                if coders.is_empty() {
                    return Err(Error::NoCoders);
                }
                self.run_ref = run_ref.clone();
                self.k = *k;
                self.coders = coders;
                self.status = vec![TopicStatus::Open; *k];
            }
            Action::LabelSubmitted { topic, label } => {
                self.ensure_open()?;
                if !self.coders.iter().any(|c| c == actor) {
                    return Err(Error::UnknownCoder(actor.to_string()));
                }
                self.check_topic(*topic)?;
                if label.trim().is_empty() {
                    return Err(Error::EmptyLabel);
                }
                let entry = self.labels.entry(*topic).or_default();
                entry.insert(actor.to_string(), label.clone());
                self.status[*topic] = topic_status(&self.coders, entry);
            }
            Action::StopwordsFlagged { .. } => self.ensure_open()?,
            Action::Resolved { topic, label } => {
                self.ensure_open()?;
                self.check_topic(*topic)?;
                if label.trim().is_empty() {
                    return Err(Error::EmptyLabel);
                }
            }
            Action::SignedOff { .. } => self.ensure_open()?,
            Action::Finalized => {
                self.ensure_open()?;
                self.closed = true;
            }
        }
        self.audit.push(AuditEvent { seq: self.audit.len(), at, actor: actor.to_string(), action });
        Ok(())
    }

    pub fn submit_label(&mut self, coder: &str, topic: usize, label: &str, at: DateTime<Utc>) -> Result<TopicStatus> {
        self.apply(coder, at, Action::LabelSubmitted { topic, label: label.to_string() })?;
        Ok(self.status[topic])
    }

    pub fn compute_agreement(&self) -> Agreement {
        let fully = self.status.iter().filter(|s| **s != TopicStatus::Open).count();
        let consensus = self.status.iter().filter(|s| **s == TopicStatus::Consensus).count();
        Agreement {
            fully_labeled: fully,
            consensus,
            fraction: (fully > 0).then(|| consensus as f64 / fully as f64),
        }
    }

    /// Records flagged stop words; an empty set yields no record.
    pub fn flag_stopwords(&mut self, words: &BTreeSet<String>, note: &str, actor: &str, at: DateTime<Utc>) -> Result<Option<FeedbackRecord>> {
        self.ensure_open()?;
        let words: BTreeSet<String> = words.iter().map(|w| w.trim().to_lowercase()).filter(|w| !w.is_empty()).collect();
        if words.is_empty() {
            return Ok(None);
        }
        let n = self.audit.iter().filter(|e| matches!(e.action, Action::StopwordsFlagged { .. })).count();
        let id = format!("fb-{}-{:03}", self.id, n + 1);
        self.apply(actor, at, Action::StopwordsFlagged { record: id.clone(), words: words.clone() })?;
        Ok(Some(FeedbackRecord {
            id,
            session: self.id.clone(),
            run_ref: self.run_ref.clone(),
            words,
            note: note.to_string(),
            actor: actor.to_string(),
            at,
        }))
    }

    /// Closes the session and emits its label set. Topics without consensus
    /// must appear in `resolutions`.
    pub fn finalize_labels(&mut self, resolutions: &BTreeMap<usize, String>, actor: &str, auditor: Option<(&str, &str)>, at: DateTime<Utc>) -> Result<LabelSet> {
        self.ensure_open()?;
        for (&topic, label) in resolutions {
            self.check_topic(topic)?;
            if label.trim().is_empty() {
                return Err(Error::EmptyLabel);
            }
        }
        let unresolved: Vec<usize> = (0..self.k).filter(|t| self.status[*t] != TopicStatus::Consensus && !resolutions.contains_key(t)).collect();
        if !unresolved.is_empty() {
            return Err(Error::UnresolvedTopics(unresolved));
        }
        let mut labels = BTreeMap::new();
        let mut resolved = BTreeSet::new();
        for topic in 0..self.k {
            let label = match resolutions.get(&topic) {
                Some(l) if self.status[topic] != TopicStatus::Consensus => {
                    resolved.insert(topic);
                    self.apply(actor, at, Action::Resolved { topic, label: tidy_label(l) })?;
                    tidy_label(l)
                }
                _ => tidy_label(&self.labels[&topic][&self.coders[0]]),
            };
            labels.insert(topic, label);
        }
        let sign_off = match auditor {
            Some((who, note)) => {
                self.apply(who, at, Action::SignedOff { note: note.to_string() })?;
                Some(SignOff { auditor: who.to_string(), at, note: note.to_string() })
            }
            None => None,
        };
        self.apply(actor, at, Action::Finalized)?;
        Ok(LabelSet {
            run_ref: self.run_ref.clone(),
            session: self.id.clone(),
            k: self.k,
            labels,
            resolved,
            categories: BTreeMap::new(),
            sign_off,
        })
    }
}

impl LabelSet {
    /// Adds or replaces the named categories; no topic may sit in two.
    pub fn group_categories(&self, grouping: &BTreeMap<String, BTreeSet<usize>>) -> Result<LabelSet> {
        let mut out = self.clone();
        for (name, topics) in grouping {
            if let Some(&t) = topics.iter().find(|&&t| t >= self.k) {
                return Err(Error::BadTopic { topic: t, k: self.k });
            }
            out.categories.insert(name.clone(), topics.clone());
        }
        let mut seen = BTreeSet::new();
        for t in out.categories.values().flatten() {
            if !seen.insert(*t) {
                return Err(Error::CategoryOverlap(*t));
            }
        }
        Ok(out)
    }

    pub fn category_of(&self, topic: usize) -> Option<&str> {
        self.categories.iter().find(|(_, ts)| ts.contains(&topic)).map(|(n, _)| n.as_str())
    }
}

/// Union of the words in several feedback records.
pub fn merge_feedback<'a>(records: impl IntoIterator<Item = &'a FeedbackRecord>) -> BTreeSet<String> {
    records.into_iter().flat_map(|r| r.words.iter().cloned()).collect()
}
