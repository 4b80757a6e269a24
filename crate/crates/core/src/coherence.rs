//! UMass topic coherence and the coherence-driven sweep over K.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{DocTermMatrix, Vocabulary};
use crate::scalar::Real;
use crate::topic_engine::{train_lda, TopicModel, TrainConfig};

/// Default number of top words scored per topic.
pub const DEFAULT_TOP_M: usize = 10;

/// Document co-occurrence statistics over binarised rows, stored as
/// per-term posting lists; joint frequencies are posting intersections.
#[derive(Debug, Clone)]
pub struct CooccurrenceTable {
    vocab: Arc<Vocabulary>,
    postings: Vec<Vec<u32>>,
    n_docs: usize,
}

impl CooccurrenceTable {
    pub fn build(dtm: &DocTermMatrix) -> Self {
        let mut postings = vec![Vec::new(); dtm.n_terms()];
        for (d, row) in dtm.rows.iter().enumerate() {
            for &(w, _) in row {
                postings[w as usize].push(d as u32);
            }
        }
        Self { vocab: dtm.vocab.clone(), postings, n_docs: dtm.n_docs() }
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn df(&self, w: usize) -> usize {
        self.postings.get(w).map_or(0, Vec::len)
    }

    /// Number of documents containing both terms; symmetric.
    pub fn co_df(&self, a: usize, b: usize) -> usize {
        let (Some(pa), Some(pb)) = (self.postings.get(a), self.postings.get(b)) else { return 0 };
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < pa.len() && j < pb.len() {
            match pa[i].cmp(&pb[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn df_term(&self, term: &str) -> usize {
        self.vocab.get(term).map_or(0, |w| self.df(w))
    }
}

/// UMass coherence of ranked term indices:
/// `sum_{m>=2} sum_{l<m} ln((co_df(w_m, w_l) + 1) / df(w_l))`.
pub fn umass_coherence<T: Real>(top_terms: &[usize], table: &CooccurrenceTable) -> Result<T> {
    if top_terms.len() < 2 {
        return Err(Error::TooFewTerms(top_terms.len()));
    }
    let term_name = |w: usize| {
        if w < table.vocab.len() {
            table.vocab.term(w).to_string()
        } else {
            format!("#{w}")
        }
    };
    if let Some(&w) = top_terms.iter().find(|&&w| table.df(w) == 0) {
        return Err(Error::UnknownTerm(term_name(w)));
    }
    let mut score = T::zero();
    for m in 1..top_terms.len() {
        for l in 0..m {
            let joint = T::of_usize(table.co_df(top_terms[m], top_terms[l]) + 1);
            score += (joint / T::of_usize(table.df(top_terms[l]))).ln();
        }
    }
    Ok(score)
}

/// [`umass_coherence`] for terms given by name.
pub fn umass_coherence_terms<T: Real, S: AsRef<str>>(terms: &[S], table: &CooccurrenceTable) -> Result<T> {
    let idx = terms
        .iter()
        .map(|t| table.vocab.get(t.as_ref()).ok_or_else(|| Error::UnknownTerm(t.as_ref().to_string())))
        .collect::<Result<Vec<_>>>()?;
    umass_coherence(&idx, table)
}

/// Per-topic UMass scores of a model's top `top_m` words.
pub fn topic_coherences<T: Real>(model: &TopicModel<T>, table: &CooccurrenceTable, top_m: usize) -> Result<Vec<T>> {
    (0..model.k()).map(|t| umass_coherence(&model.top_word_indices(t, top_m)?, table)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KScores<T> {
    pub per_topic: Vec<T>,
    pub mean: T,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub template: TrainConfig,
    pub ks: Vec<usize>,
    pub top_m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedK {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport<T> {
    pub per_k: BTreeMap<usize, KScores<T>>,
    pub failed: BTreeMap<usize, FailedK>,
    /// `None` only when every candidate failed.
    pub recommended_k: Option<usize>,
    pub sweep_config: SweepConfig,
}

/// Argmax of the mean score; the smallest K wins ties.
pub fn recommend_k<T: Real>(means: &BTreeMap<usize, T>) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (&k, &score) in means {
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((k, score));
        }
    }
    best.map(|(k, _)| k)
}

/// Training seed for candidate `k`: SplitMix64 finaliser of `seed ^ k`.
pub fn derive_seed(seed: u64, k: usize) -> u64 {
    let mut z = (seed ^ k as u64).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Trains one model per candidate K and scores it. Candidates that fail to
/// train are recorded and the sweep continues. Models are returned keyed by K.
pub fn sweep_k_with_models<T: Real>(
    dtm: &DocTermMatrix,
    k_candidates: &[usize],
    template: &TrainConfig,
    top_m: usize,
) -> Result<(CoherenceReport<T>, BTreeMap<usize, TopicModel<T>>)> {
    if k_candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if let Some(k) = k_candidates.iter().find(|&&k| k < 2) {
        return Err(Error::InvalidConfig(format!("K candidate {k} must be >= 2")));
    }
    if top_m < 2 {
        return Err(Error::TooFewTerms(top_m));
    }
    let mut ks = k_candidates.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let table = CooccurrenceTable::build(dtm);

    let legs: Vec<(usize, Result<(KScores<T>, TopicModel<T>)>)> = ks
        .par_iter()
        .map(|&k| {
            let cfg = TrainConfig { k, seed: derive_seed(template.seed, k), ..template.clone() };
            let leg = train_lda::<T>(dtm, &cfg).and_then(|model| {
                let per_topic = topic_coherences(&model, &table, top_m.min(dtm.n_terms()))?;
                let mean = per_topic.iter().copied().sum::<T>() / T::of_usize(per_topic.len());
                Ok((KScores { per_topic, mean, seed: cfg.seed }, model))
            });
            (k, leg)
        })
        .collect();

    let mut per_k = BTreeMap::new();
    let mut failed = BTreeMap::new();
    let mut models = BTreeMap::new();
    for (k, leg) in legs {
        match leg {
            Ok((scores, model)) => {
                per_k.insert(k, scores);
                models.insert(k, model);
            }
            Err(e) => {
                failed.insert(k, FailedK { code: e.code().to_string(), message: e.to_string() });
            }
        }
    }
    let means: BTreeMap<usize, T> = per_k.iter().map(|(&k, s)| (k, s.mean)).collect();
    let report = CoherenceReport {
        recommended_k: recommend_k(&means),
        per_k,
        failed,
        sweep_config: SweepConfig { template: template.clone(), ks, top_m },
    };
    Ok((report, models))
}

pub fn sweep_k<T: Real>(dtm: &DocTermMatrix, k_candidates: &[usize], template: &TrainConfig, top_m: usize) -> Result<CoherenceReport<T>> {
    Ok(sweep_k_with_models(dtm, k_candidates, template, top_m)?.0)
}
