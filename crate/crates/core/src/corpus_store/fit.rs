//! Suitability / sufficiency fit assessment for an assemblage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Suitability,
    Sufficiency,
}

/// One question of the built-in checklist.
#[derive(Debug, Clone, Copy)]
pub struct ChecklistItem {
    pub id: &'static str,
    pub dimension: Dimension,
    pub question: &'static str,
}

/// Built-in checklist: five items per dimension, fixed so scores compare across assemblages.
pub const CHECKLIST: [ChecklistItem; 10] = [
    ChecklistItem { id: "topic_alignment", dimension: Dimension::Suitability, question: "Do the data address the phenomena of interest of the new study?" },
    ChecklistItem { id: "theorizing_mode", dimension: Dimension::Suitability, question: "Can the data support the intended inductive or deductive theorizing?" },
    ChecklistItem { id: "population_match", dimension: Dimension::Suitability, question: "Were the participants drawn from the population the new study targets?" },
    ChecklistItem { id: "time_frame", dimension: Dimension::Suitability, question: "Is the collection period relevant to the new research question?" },
    ChecklistItem { id: "unit_of_analysis", dimension: Dimension::Suitability, question: "Does the unit of each record match the intended unit of analysis?" },
    ChecklistItem { id: "thick_description", dimension: Dimension::Sufficiency, question: "Do the records contain thick descriptions or narratives?" },
    ChecklistItem { id: "chain_of_evidence", dimension: Dimension::Sufficiency, question: "Can a chain of evidence be traced from records to claims?" },
    ChecklistItem { id: "documented_methods", dimension: Dimension::Sufficiency, question: "Are the original collection methods documented?" },
    ChecklistItem { id: "researcher_credentials", dimension: Dimension::Sufficiency, question: "Are the original researchers' roles and credentials known?" },
    ChecklistItem { id: "time_in_field", dimension: Dimension::Sufficiency, question: "Is the time spent in the field reported and adequate?" },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
    #[default]
    Unknown,
}

/// A checklist response, either a bare answer or an answer with a note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Bare(Answer),
    Noted {
        answer: Answer,
        #[serde(default)]
        note: String,
    },
}

impl Response {
    fn parts(&self) -> (Answer, String) {
        match self {
            Response::Bare(a) => (*a, String::new()),
            Response::Noted { answer, note } => (*answer, note.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemResponse {
    pub id: String,
    pub answer: Answer,
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Proceed,
    Caution,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitThresholds {
    pub proceed: f64,
    pub reject: f64,
}

impl Default for FitThresholds {
    fn default() -> Self {
        Self { proceed: 0.6, reject: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub assemblage: String,
    pub suitability_items: Vec<ItemResponse>,
    pub sufficiency_items: Vec<ItemResponse>,
    /// `None` when every suitability item is unknown.
    pub suitability_score: Option<f64>,
    pub sufficiency_score: Option<f64>,
    pub verdict: Verdict,
}

/// yes / (yes + no); `None` when nothing was answered.
pub fn score(items: &[ItemResponse]) -> Option<f64> {
    let yes = items.iter().filter(|i| i.answer == Answer::Yes).count();
    let no = items.iter().filter(|i| i.answer == Answer::No).count();
    (yes + no > 0).then(|| yes as f64 / (yes + no) as f64)
}

pub fn verdict(suitability: Option<f64>, sufficiency: Option<f64>, t: &FitThresholds) -> Verdict {
    let scores = [suitability, sufficiency];
    if scores.iter().flatten().any(|s| *s < t.reject) {
        Verdict::Reject
    } else if scores.iter().all(|s| s.is_some_and(|s| s >= t.proceed)) {
        Verdict::Proceed
    } else {
        Verdict::Caution
    }
}

pub(crate) fn build_report(
    assemblage: &str,
    responses: &BTreeMap<String, Response>,
    thresholds: &FitThresholds,
) -> Result<FitReport> {
    if let Some(unknown) = responses.keys().find(|k| !CHECKLIST.iter().any(|i| i.id == k.as_str())) {
        return Err(Error::UnknownItem(unknown.clone()));
    }
    let collect = |dim: Dimension| -> Vec<ItemResponse> {
        CHECKLIST
            .iter()
            .filter(|i| i.dimension == dim)
            .map(|item| {
                let (answer, note) = responses.get(item.id).map(Response::parts).unwrap_or_default();
                ItemResponse { id: item.id.to_string(), answer, note }
            })
            .collect()
    };
    let suitability_items = collect(Dimension::Suitability);
    let sufficiency_items = collect(Dimension::Sufficiency);
    let suitability_score = score(&suitability_items);
    let sufficiency_score = score(&sufficiency_items);
    Ok(FitReport {
        assemblage: assemblage.to_string(),
        verdict: verdict(suitability_score, sufficiency_score, thresholds),
        suitability_items,
        sufficiency_items,
        suitability_score,
        sufficiency_score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn answers(suit: (usize, usize), suff: (usize, usize)) -> BTreeMap<String, Response> {
        let mut out = BTreeMap::new();
        let mut fill = |dim: Dimension, (yes, no): (usize, usize)| {
            for (n, item) in CHECKLIST.iter().filter(|i| i.dimension == dim).enumerate() {
                let a = if n < yes { Answer::Yes } else if n < yes + no { Answer::No } else { continue };
                out.insert(item.id.to_string(), Response::Bare(a));
            }
        };
        fill(Dimension::Suitability, suit);
        fill(Dimension::Sufficiency, suff);
        out
    }

    #[test]
    fn proceed_on_strong_scores() {
        let r = build_report("a", &answers((4, 1), (3, 0)), &FitThresholds::default()).unwrap();
        assert_eq!(r.suitability_score, Some(0.8));
        assert_eq!(r.sufficiency_score, Some(1.0));
        assert_eq!(r.verdict, Verdict::Proceed);
    }

    #[test]
    fn all_unknown_is_caution() {
        let r = build_report("a", &BTreeMap::new(), &FitThresholds::default()).unwrap();
        assert_eq!(r.suitability_score, None);
        assert_eq!(r.sufficiency_score, None);
        assert_eq!(r.verdict, Verdict::Caution);
    }

    #[test]
    fn weak_suitability_rejects() {
        let r = build_report("a", &answers((1, 4), (0, 0)), &FitThresholds::default()).unwrap();
        assert_eq!(r.suitability_score, Some(0.2));
        assert_eq!(r.verdict, Verdict::Reject);
    }

    #[test]
    fn middling_scores_are_caution() {
        let r = build_report("a", &answers((1, 1), (3, 0)), &FitThresholds::default()).unwrap();
        assert_eq!(r.suitability_score, Some(0.5));
        assert_eq!(r.verdict, Verdict::Caution);
    }

    #[test]
    fn unknown_item_is_rejected() {
        let mut m = BTreeMap::new();
        m.insert("vibes".to_string(), Response::Bare(Answer::Yes));
        assert!(matches!(build_report("a", &m, &FitThresholds::default()), Err(Error::UnknownItem(_))));
    }

    #[test]
    fn noted_responses_deserialize() {
        let m: BTreeMap<String, Response> = serde_json::from_str(
            r#"{"topic_alignment":"yes","thick_description":{"answer":"no","note":"short memos"}}"#,
        )
        .unwrap();
        let r = build_report("a", &m, &FitThresholds::default()).unwrap();
        assert_eq!(r.sufficiency_items[0].note, "short memos");
        assert_eq!(r.sufficiency_score, Some(0.0));
        assert_eq!(r.verdict, Verdict::Reject);
    }
}
