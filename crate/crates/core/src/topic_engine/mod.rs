//! LDA training by collapsed Gibbs sampling, point estimates and queries.
//!
//! Point estimates average the sampler counts over every post-burn-in sweep:
//!
//! ```text
//! phi[k][w]   = (mean n_kw + beta)  / (mean n_k + V * beta)
//! theta[d][k] = (mean n_dk + alpha) / (n_d + K * alpha)
//! ```
//!
//! Documents with no in-vocabulary tokens are skipped by the sampler and
//! receive a uniform theta row.

pub mod artifact;
mod sampler;

use std::cmp::Ordering;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::preprocess::{DocTermMatrix, Vocabulary};
use crate::scalar::Real;

pub use sampler::{rng_for, GibbsSampler};

/// Stream id reserved for fold-in inference, disjoint from chain streams.
const FOLD_IN_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub chains: usize,
}

impl TrainConfig {
    /// Defaults for `k` topics: alpha = min(50/K, 1), beta = 0.01,
    /// 1000 sweeps with 500 burn-in, one chain.
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            alpha: (50.0 / k.max(1) as f64).min(1.0),
            beta: 0.01,
            iterations: 1000,
            burn_in: 500,
            seed: 42,
            chains: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.k < 1 {
            return bad("k must be >= 1");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be > 0");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad("beta must be > 0");
        }
        if self.iterations < 1 {
            return bad("iterations must be >= 1");
        }
        if self.burn_in >= self.iterations {
            return bad("burn_in must be < iterations");
        }
        if self.chains < 1 {
            return bad("chains must be >= 1");
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::with_k(10)
    }
}

/// Fold-in settings for inferring theta of unseen documents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldInConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl FoldInConfig {
    pub fn from_train(cfg: &TrainConfig) -> Self {
        Self { iterations: cfg.iterations, burn_in: cfg.burn_in, seed: cfg.seed }
    }
}

/// Final sampler counts of the selected chain.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub n_dk: Matrix<u32>,
    pub n_kw: Matrix<u32>,
    pub n_k: Vec<u64>,
}

/// Counts averaged over post-burn-in sweeps; phi and theta derive from these.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCounts {
    pub n_dk: Matrix<f64>,
    pub n_kw: Matrix<f64>,
    pub doc_lengths: Vec<u64>,
    pub sweeps: usize,
}

/// A trained topic model over scalar type `T`.
#[derive(Debug, Clone)]
pub struct TopicModel<T: Real = f64> {
    pub config: TrainConfig,
    pub vocab: Arc<Vocabulary>,
    pub doc_ids: Vec<String>,
    /// P(W|T), K×V.
    pub phi: Matrix<T>,
    /// P(T|D), D×K.
    pub theta: Matrix<T>,
    /// Rows that had no tokens at training time.
    pub empty_docs: Vec<bool>,
    pub assignments: Vec<u32>,
    pub counts: Option<SufficientStats>,
    pub mean_counts: Option<MeanCounts>,
    /// Joint log-likelihood per sweep, one series per chain.
    pub chain_logs: Vec<Vec<f64>>,
    pub selected_chain: usize,
    pub dtm_hash: String,
    pub vocab_hash: String,
}

impl<T: Real> TopicModel<T> {
    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn n_terms(&self) -> usize {
        self.vocab.len()
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn train_log(&self) -> &[f64] {
        self.chain_logs.get(self.selected_chain).map_or(&[], Vec::as_slice)
    }

    /// Builds a model from externally supplied estimates (no sampler state).
    pub fn from_estimates(config: TrainConfig, vocab: Arc<Vocabulary>, doc_ids: Vec<String>, phi: Matrix<T>, theta: Matrix<T>) -> Result<Self> {
        if phi.rows() != config.k || phi.cols() != vocab.len() {
            return Err(Error::VocabMismatch(format!("phi is {}x{}, expected {}x{}", phi.rows(), phi.cols(), config.k, vocab.len())));
        }
        if theta.rows() != doc_ids.len() || theta.cols() != config.k {
            return Err(Error::VocabMismatch(format!("theta is {}x{}, expected {}x{}", theta.rows(), theta.cols(), doc_ids.len(), config.k)));
        }
        let n = doc_ids.len();
        Ok(Self {
            vocab_hash: crate::provenance::sha256_hex(vocab.to_text().as_bytes()),
            config,
            vocab,
            doc_ids,
            phi,
            theta,
            empty_docs: vec![false; n],
            assignments: Vec::new(),
            counts: None,
            mean_counts: None,
            chain_logs: Vec::new(),
            selected_chain: 0,
            dtm_hash: String::new(),
        })
    }

    fn check_topic(&self, topic: usize) -> Result<()> {
        if topic < self.k() {
            Ok(())
        } else {
            Err(Error::BadTopic { topic, k: self.k() })
        }
    }

    /// Top `n` terms of `topic` by P(W|T), ties broken lexicographically.
    /// `n` is clamped to the vocabulary size.
    pub fn top_words(&self, topic: usize, n: usize) -> Result<Vec<(String, T)>> {
        self.check_topic(topic)?;
        let row = self.phi.row(topic);
        let mut idx: Vec<usize> = (0..row.len()).collect();
        idx.sort_by(|&a, &b| {
            row[b].partial_cmp(&row[a]).unwrap_or(Ordering::Equal).then_with(|| self.vocab.term(a).cmp(self.vocab.term(b)))
        });
        Ok(idx.into_iter().take(n).map(|w| (self.vocab.term(w).to_string(), row[w])).collect())
    }

    /// Top term indices, same order as [`Self::top_words`].
    pub fn top_word_indices(&self, topic: usize, n: usize) -> Result<Vec<usize>> {
        Ok(self.top_words(topic, n)?.into_iter().map(|(t, _)| self.vocab.get(&t).expect("term in vocab")).collect())
    }

    /// Documents ranked by P(T|D) for `topic`, ties by id; empty documents excluded.
    pub fn top_documents(&self, topic: usize, n: usize) -> Result<Vec<(String, T)>> {
        self.check_topic(topic)?;
        let mut docs: Vec<usize> = (0..self.n_docs()).filter(|&d| !self.empty_docs[d]).collect();
        docs.sort_by(|&a, &b| {
            self.theta
                .get(b, topic)
                .partial_cmp(&self.theta.get(a, topic))
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.doc_ids[a].cmp(&self.doc_ids[b]))
        });
        Ok(docs.into_iter().take(n).map(|d| (self.doc_ids[d].clone(), self.theta.get(d, topic))).collect())
    }

    /// Theta for an unseen document given as `(term index, count)` pairs over
    /// the model vocabulary, by fold-in Gibbs with phi frozen.
    pub fn infer_theta(&self, doc: &[(u32, u32)], fold: &FoldInConfig) -> Result<Vec<T>> {
        self.infer_theta_stream(doc, fold, 0)
    }

    fn infer_theta_stream(&self, doc: &[(u32, u32)], fold: &FoldInConfig, stream: u64) -> Result<Vec<T>> {
        if fold.iterations < 1 || fold.burn_in >= fold.iterations {
            return Err(Error::InvalidConfig("fold-in needs burn_in < iterations".into()));
        }
        let mut words = Vec::new();
        for &(w, c) in doc {
            if w as usize >= self.n_terms() {
                return Err(Error::VocabMismatch(format!("term index {w} outside vocabulary")));
            }
            words.extend(std::iter::repeat_n(w, c as usize));
        }
        if words.is_empty() {
            return Err(Error::OovOnly);
        }
        let k = self.k();
        if k == 1 {
            return Ok(vec![T::one()]);
        }
        let phi_cols: Vec<Vec<f64>> = (0..self.n_terms())
            .map(|w| (0..k).map(|t| self.phi.get(t, w).to_f64_lossy()).collect())
            .collect();
        let mut rng = rng_for(fold.seed, FOLD_IN_STREAM_BASE + stream);
        let theta = sampler::fold_in(&phi_cols, &words, self.config.alpha, fold.iterations, fold.burn_in, &mut rng);
        Ok(theta.into_iter().map(T::of).collect())
    }

    /// Held-out perplexity; each evaluation document is folded in with its own stream.
    pub fn perplexity(&self, eval: &DocTermMatrix, fold: &FoldInConfig) -> Result<T> {
        self.check_vocab(eval)?;
        let thetas = eval
            .rows
            .iter()
            .enumerate()
            .map(|(d, row)| if row.is_empty() { Ok(None) } else { self.infer_theta_stream(row, fold, d as u64).map(Some) })
            .collect::<Result<Vec<_>>>()?;
        self.perplexity_with(eval, |d| thetas[d].clone())
    }

    /// Perplexity of the training matrix using the trained theta rows.
    pub fn training_perplexity(&self, dtm: &DocTermMatrix) -> Result<T> {
        self.check_vocab(dtm)?;
        if dtm.n_docs() != self.n_docs() {
            return Err(Error::VocabMismatch("training matrix row count differs".into()));
        }
        self.perplexity_with(dtm, |d| Some(self.theta.row(d).to_vec()))
    }

    fn check_vocab(&self, dtm: &DocTermMatrix) -> Result<()> {
        if dtm.vocab.terms() != self.vocab.terms() {
            return Err(Error::VocabMismatch("evaluation vocabulary differs from model vocabulary".into()));
        }
        Ok(())
    }

    fn perplexity_with<F>(&self, dtm: &DocTermMatrix, theta_of: F) -> Result<T>
    where
        F: Fn(usize) -> Option<Vec<T>>,
    {
        let mut log_sum = T::zero();
        let mut tokens = 0u64;
        for (d, row) in dtm.rows.iter().enumerate() {
            let Some(theta) = theta_of(d) else { continue };
            for &(w, c) in row {
                let p: T = (0..self.k()).map(|t| theta[t] * self.phi.get(t, w as usize)).sum();
                log_sum += T::of(c as f64) * p.ln();
                tokens += c as u64;
            }
        }
        if tokens == 0 {
            return Err(Error::OovOnly);
        }
        Ok((-log_sum / T::of(tokens as f64)).exp())
    }
}

struct ChainResult {
    sampler: GibbsSampler,
    log: Vec<f64>,
    sum_dk: Matrix<u64>,
    sum_kw: Matrix<u64>,
}

fn run_chain(dtm: &DocTermMatrix, cfg: &TrainConfig, chain: usize) -> ChainResult {
    let mut sampler = GibbsSampler::new(dtm, cfg.k, cfg.alpha, cfg.beta, cfg.seed, chain as u64);
    let mut sum_dk = Matrix::filled(dtm.n_docs(), cfg.k, 0u64);
    let mut sum_kw = Matrix::filled(cfg.k, dtm.n_terms(), 0u64);
    let mut log = Vec::with_capacity(cfg.iterations);
    for sweep in 0..cfg.iterations {
        sampler.sweep();
        log.push(sampler.log_likelihood());
        if sweep >= cfg.burn_in {
            sampler.accumulate(&mut sum_dk, &mut sum_kw);
        }
    }
    ChainResult { sampler, log, sum_dk, sum_kw }
}

fn validate_input(dtm: &DocTermMatrix, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if dtm.token_total == 0 || dtm.n_terms() == 0 {
        return Err(Error::EmptyInput);
    }
    if cfg.k as u64 > dtm.token_total {
        return Err(Error::KTooLarge { k: cfg.k, tokens: dtm.token_total });
    }
    Ok(())
}

/// Trains LDA on the global rayon pool. Chains run in parallel; the result
/// does not depend on the number of threads.
pub fn train_lda<T: Real>(dtm: &DocTermMatrix, cfg: &TrainConfig) -> Result<TopicModel<T>> {
    validate_input(dtm, cfg)?;
    let chains: Vec<ChainResult> = (0..cfg.chains).into_par_iter().map(|c| run_chain(dtm, cfg, c)).collect();
    Ok(assemble(dtm, cfg, chains))
}

/// Same as [`train_lda`] on a dedicated pool of `threads` workers.
pub fn train_lda_with_threads<T: Real>(dtm: &DocTermMatrix, cfg: &TrainConfig, threads: usize) -> Result<TopicModel<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| train_lda(dtm, cfg))
}

fn assemble<T: Real>(dtm: &DocTermMatrix, cfg: &TrainConfig, chains: Vec<ChainResult>) -> TopicModel<T> {
    // highest final log-likelihood wins; earliest chain on ties
    let mut best = 0;
    for (i, c) in chains.iter().enumerate() {
        if c.log.last() > chains[best].log.last() {
            best = i;
        }
    }
    let chain_logs: Vec<Vec<f64>> = chains.iter().map(|c| c.log.clone()).collect();
    let chosen = chains.into_iter().nth(best).expect("at least one chain");

    let kept = (cfg.iterations - cfg.burn_in) as f64;
    let (k, v, d) = (cfg.k, dtm.n_terms(), dtm.n_docs());
    let mean_kw = Matrix::from_vec(k, v, chosen.sum_kw.as_slice().iter().map(|&s| s as f64 / kept).collect());
    let mean_dk = Matrix::from_vec(d, k, chosen.sum_dk.as_slice().iter().map(|&s| s as f64 / kept).collect());
    let doc_lengths: Vec<u64> = (0..d).map(|r| dtm.doc_len(r)).collect();
    let empty_docs: Vec<bool> = doc_lengths.iter().map(|&n| n == 0).collect();

    let mean = MeanCounts { n_dk: mean_dk, n_kw: mean_kw, doc_lengths, sweeps: kept as usize };
    let (phi, theta) = estimates::<T>(&mean, cfg);

    let counts = SufficientStats {
        n_dk: chosen.sampler.doc_topic_counts(),
        n_kw: chosen.sampler.topic_word_counts(),
        n_k: chosen.sampler.topic_totals().to_vec(),
    };
    TopicModel {
        config: cfg.clone(),
        vocab: dtm.vocab.clone(),
        doc_ids: dtm.doc_ids.clone(),
        phi,
        theta,
        empty_docs,
        assignments: chosen.sampler.assignments().to_vec(),
        counts: Some(counts),
        mean_counts: Some(mean),
        chain_logs,
        selected_chain: best,
        dtm_hash: crate::provenance::sha256_hex(dtm.to_triples().as_bytes()),
        vocab_hash: crate::provenance::sha256_hex(dtm.vocab.to_text().as_bytes()),
    }
}

/// Smoothed phi and theta from averaged counts.
pub fn estimates<T: Real>(mean: &MeanCounts, cfg: &TrainConfig) -> (Matrix<T>, Matrix<T>) {
    let (k, v) = (mean.n_kw.rows(), mean.n_kw.cols());
    let alpha = T::of(cfg.alpha);
    let beta = T::of(cfg.beta);
    let v_beta = T::of_usize(v) * beta;
    let mut phi = Matrix::filled(k, v, T::zero());
    for t in 0..k {
        let row = mean.n_kw.row(t);
        let n_t: T = row.iter().map(|&x| T::of(x)).sum();
        let denom = n_t + v_beta;
        for (w, &x) in row.iter().enumerate() {
            phi.set(t, w, (T::of(x) + beta) / denom);
        }
    }
    let d = mean.n_dk.rows();
    let k_alpha = T::of_usize(k) * alpha;
    let mut theta = Matrix::filled(d, k, T::zero());
    for r in 0..d {
        if mean.doc_lengths[r] == 0 {
            theta.row_mut(r).iter_mut().for_each(|x| *x = T::one() / T::of_usize(k));
            continue;
        }
        let denom = T::of(mean.doc_lengths[r] as f64) + k_alpha;
        for t in 0..k {
            theta.set(r, t, (T::of(mean.n_dk.get(r, t)) + alpha) / denom);
        }
    }
    (phi, theta)
}
