//! Comparison of topic weights across metadata groups, time and models.

mod divergence;
mod stats;

use std::collections::BTreeMap;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

pub use divergence::{jensen_shannon, match_from_divergence, match_topics, min_cost_assignment, MatchedPair, TopicMatch, MIN_SHARED_TERMS};
pub use stats::{bonferroni, f_upper_p, incomplete_beta, one_way_anova, t_two_sided_p, welch_t_test, TestKind, TestResult};

use crate::corpus_store::{DocRef, Document, MISSING_BUCKET};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::topic_engine::TopicModel;

/// θ weights of one topic partitioned by a metadata value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedWeights<T> {
    pub topic: usize,
    pub key: String,
    pub groups: BTreeMap<String, Vec<T>>,
    /// Documents lacking the key; reported but never tested.
    pub missing: Vec<String>,
}

fn check_members<T: Real>(model: &TopicModel<T>, members: &[(DocRef, &Document)], topic: usize) -> Result<()> {
    if topic >= model.k() {
        return Err(Error::BadTopic { topic, k: model.k() });
    }
    let same = members.len() == model.n_docs() && members.iter().zip(&model.doc_ids).all(|((r, _), id)| r.to_string() == *id);
    if !same {
        return Err(Error::ModelMismatch("model was not trained on these documents".into()));
    }
    Ok(())
}

/// Splits column `topic` of θ by the value each member has for `key`.
pub fn group_topic_weights<T: Real>(model: &TopicModel<T>, members: &[(DocRef, &Document)], key: &str, topic: usize) -> Result<GroupedWeights<T>> {
    check_members(model, members, topic)?;
    let known = members.iter().any(|(r, d)| d.metadata(&r.corpus, key).is_some()) || crate::corpus_store::BUILTIN_KEYS.contains(&key);
    if !known {
        return Err(Error::UnknownKey(key.to_string()));
    }
    let mut groups: BTreeMap<String, Vec<T>> = BTreeMap::new();
    let mut missing = Vec::new();
    for (i, (r, d)) in members.iter().enumerate() {
        match d.metadata(&r.corpus, key) {
            Some(v) if v != MISSING_BUCKET => groups.entry(v).or_default().push(model.theta.get(i, topic)),
            _ => missing.push(r.to_string()),
        }
    }
    Ok(GroupedWeights { topic, key: key.to_string(), groups, missing })
}

/// Which test to run on grouped weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestChoice {
    /// Welch t for two groups, ANOVA otherwise.
    Auto,
    Welch,
    Anova,
}

impl std::str::FromStr for TestChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(TestChoice::Auto),
            "welch" | "welch_t" | "t" => Ok(TestChoice::Welch),
            "anova" | "anova_f" | "f" => Ok(TestChoice::Anova),
            other => Err(Error::InvalidConfig(format!("unknown test `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary<T> {
    pub label: String,
    pub n: usize,
    pub mean: T,
}

/// One row of `tests.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTest<T> {
    pub topic: usize,
    pub key: String,
    pub result: TestResult<T>,
    /// Bonferroni-adjusted p when correction was requested.
    pub adjusted_p: Option<T>,
    pub groups: Vec<GroupSummary<T>>,
    pub missing: usize,
}

/// Runs the chosen test on the grouped weights. `family_size` > 0 applies
/// Bonferroni correction over that many simultaneous tests.
pub fn test_groups<T: Real>(grouped: &GroupedWeights<T>, choice: TestChoice, family_size: usize) -> Result<GroupTest<T>> {
    let lists: Vec<&[T]> = grouped.groups.values().map(Vec::as_slice).collect();
    let result = match choice {
        TestChoice::Welch | TestChoice::Auto if lists.len() == 2 => welch_t_test(lists[0], lists[1])?,
        TestChoice::Welch => {
            return Err(Error::WrongGroupCount { kind: "welch_t", expected: "exactly 2", found: lists.len() });
        }
        TestChoice::Anova | TestChoice::Auto => {
            if lists.len() < 2 {
                return Err(Error::WrongGroupCount { kind: "anova_f", expected: "at least 2", found: lists.len() });
            }
            one_way_anova(&lists)?
        }
    };
    let groups = grouped
        .groups
        .iter()
        .map(|(label, xs)| GroupSummary { label: label.clone(), n: xs.len(), mean: stats::mean(xs) })
        .collect();
    Ok(GroupTest {
        topic: grouped.topic,
        key: grouped.key.clone(),
        adjusted_p: (family_size > 0).then(|| bonferroni(result.p_value, family_size)),
        result,
        groups,
        missing: grouped.missing.len(),
    })
}

/// Calendar granularity for trends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bin {
    Year,
    Quarter,
    Month,
}

impl Bin {
    fn label(self, date: chrono::NaiveDate) -> String {
        match self {
            Bin::Year => format!("{:04}", date.year()),
            Bin::Quarter => format!("{:04}-Q{}", date.year(), date.month0() / 3 + 1),
            Bin::Month => format!("{:04}-{:02}", date.year(), date.month()),
        }
    }
}

impl std::str::FromStr for Bin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "year" => Ok(Bin::Year),
            "quarter" => Ok(Bin::Quarter),
            "month" => Ok(Bin::Month),
            other => Err(Error::InvalidConfig(format!("unknown bin `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint<T> {
    pub bin: String,
    pub mean: T,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend<T> {
    pub topic: usize,
    pub bin: Bin,
    pub points: Vec<TrendPoint<T>>,
    pub undated: usize,
}

/// Mean weight of `topic` per calendar bin, in chronological order.
pub fn topic_trend<T: Real>(model: &TopicModel<T>, members: &[(DocRef, &Document)], topic: usize, bin: Bin) -> Result<Trend<T>> {
    check_members(model, members, topic)?;
    // labels are zero-padded so lexical order is chronological
    let mut bins: BTreeMap<String, Vec<T>> = BTreeMap::new();
    let mut undated = 0;
    for (i, (_, d)) in members.iter().enumerate() {
        match d.timestamp {
            Some(date) => bins.entry(bin.label(date)).or_default().push(model.theta.get(i, topic)),
            None => undated += 1,
        }
    }
    if bins.is_empty() {
        return Err(Error::NoTimestamps);
    }
    let points = bins.into_iter().map(|(bin, xs)| TrendPoint { mean: stats::mean(&xs), n: xs.len(), bin }).collect();
    Ok(Trend { topic, bin, points, undated })
}
