//! Collapsed Gibbs sampler state for LDA.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;
use crate::preprocess::DocTermMatrix;
use crate::scalar::ln_gamma;

/// Random stream for `(seed, stream)`. ChaCha8 with the seed expanded by
/// `seed_from_u64` (PCG32 key expansion) and the 64-bit stream id selecting
/// an independent keystream; identical on every platform.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Token-level Gibbs state over the non-empty rows of a document-term matrix.
///
/// Tokens of a document are laid out by ascending term index, each term
/// repeated `count` times. Topic-word counts are stored word-major so the
/// per-token conditional reads one contiguous slice.
#[derive(Debug, Clone)]
pub struct GibbsSampler {
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    /// Matrix row index of each sampled document.
    docs: Vec<usize>,
    offsets: Vec<usize>,
    words: Vec<u32>,
    z: Vec<u32>,
    n_dk: Vec<u32>,
    n_wk: Vec<u32>,
    n_k: Vec<u64>,
    n_rows: usize,
    rng: ChaCha8Rng,
    probs: Vec<f64>,
}

impl GibbsSampler {
    /// Initialises assignments uniformly at random from `rng_for(seed, stream)`.
    pub fn new(dtm: &DocTermMatrix, k: usize, alpha: f64, beta: f64, seed: u64, stream: u64) -> Self {
        let v = dtm.n_terms();
        let mut docs = Vec::new();
        let mut offsets = vec![0];
        let mut words = Vec::with_capacity(dtm.token_total as usize);
        for (d, row) in dtm.rows.iter().enumerate() {
            if row.is_empty() {
                continue;
            }
            docs.push(d);
            for &(w, c) in row {
                words.extend(std::iter::repeat_n(w, c as usize));
            }
            offsets.push(words.len());
        }
        let mut rng = rng_for(seed, stream);
        let z: Vec<u32> = (0..words.len()).map(|_| rng.random_range(0..k as u32)).collect();
        let mut s = Self {
            k,
            v,
            alpha,
            beta,
            n_dk: vec![0; docs.len() * k],
            n_wk: vec![0; v * k],
            n_k: vec![0; k],
            n_rows: dtm.n_docs(),
            docs,
            offsets,
            words,
            z,
            rng,
            probs: vec![0.0; k],
        };
        s.recount();
        s
    }

    fn recount(&mut self) {
        self.n_dk.iter_mut().for_each(|x| *x = 0);
        self.n_wk.iter_mut().for_each(|x| *x = 0);
        self.n_k.iter_mut().for_each(|x| *x = 0);
        let k = self.k;
        for j in 0..self.docs.len() {
            for i in self.offsets[j]..self.offsets[j + 1] {
                let (w, t) = (self.words[i] as usize, self.z[i] as usize);
                self.n_dk[j * k + t] += 1;
                self.n_wk[w * k + t] += 1;
                self.n_k[t] += 1;
            }
        }
    }

    /// One full sweep over every token, resampling
    /// `P(z = t) ∝ (n_dt + α)(n_tw + β)/(n_t + Vβ)` with the token removed.
    pub fn sweep(&mut self) {
        let k = self.k;
        let v_beta = self.v as f64 * self.beta;
        for j in 0..self.docs.len() {
            let doc_counts = j * k;
            for i in self.offsets[j]..self.offsets[j + 1] {
                let w = self.words[i] as usize;
                let old = self.z[i] as usize;
                self.n_dk[doc_counts + old] -= 1;
                self.n_wk[w * k + old] -= 1;
                self.n_k[old] -= 1;

                let dk = &self.n_dk[doc_counts..doc_counts + k];
                let wk = &self.n_wk[w * k..(w + 1) * k];
                let mut total = 0.0;
                for t in 0..k {
                    total += (dk[t] as f64 + self.alpha) * (wk[t] as f64 + self.beta) / (self.n_k[t] as f64 + v_beta);
                    self.probs[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.probs.iter().position(|&c| u < c).unwrap_or(k - 1);

                self.z[i] = new as u32;
                self.n_dk[doc_counts + new] += 1;
                self.n_wk[w * k + new] += 1;
                self.n_k[new] += 1;
            }
        }
    }

    /// Collapsed joint log p(w, z) up to no constant (all Gamma terms kept).
    pub fn log_likelihood(&self) -> f64 {
        let k = self.k;
        let (alpha, beta) = (self.alpha, self.beta);
        let v_beta = self.v as f64 * beta;
        let lg_beta = ln_gamma(beta);
        let mut ll = k as f64 * ln_gamma(v_beta);
        for t in 0..k {
            ll -= ln_gamma(self.n_k[t] as f64 + v_beta);
        }
        for &c in &self.n_wk {
            if c > 0 {
                ll += ln_gamma(c as f64 + beta) - lg_beta;
            }
        }
        let lg_alpha = ln_gamma(alpha);
        let k_alpha = k as f64 * alpha;
        let lg_k_alpha = ln_gamma(k_alpha);
        for j in 0..self.docs.len() {
            let n_d = (self.offsets[j + 1] - self.offsets[j]) as f64;
            ll += lg_k_alpha - ln_gamma(n_d + k_alpha);
            for &c in &self.n_dk[j * k..(j + 1) * k] {
                if c > 0 {
                    ll += ln_gamma(c as f64 + alpha) - lg_alpha;
                }
            }
        }
        ll
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Current topic per token position, documents in matrix row order.
    pub fn assignments(&self) -> &[u32] {
        &self.z
    }

    pub fn token_words(&self) -> &[u32] {
        &self.words
    }

    /// Topic counts per matrix row (empty rows are all zero), D×K.
    pub fn doc_topic_counts(&self) -> Matrix<u32> {
        let mut m = Matrix::filled(self.n_rows, self.k, 0u32);
        for (j, &d) in self.docs.iter().enumerate() {
            m.row_mut(d).copy_from_slice(&self.n_dk[j * self.k..(j + 1) * self.k]);
        }
        m
    }

    /// Topic-word counts, K×V.
    pub fn topic_word_counts(&self) -> Matrix<u32> {
        let mut m = Matrix::filled(self.k, self.v, 0u32);
        for w in 0..self.v {
            for t in 0..self.k {
                m.set(t, w, self.n_wk[w * self.k + t]);
            }
        }
        m
    }

    pub fn topic_totals(&self) -> &[u64] {
        &self.n_k
    }

    /// Adds current counts into running sums (D×K and K×V layouts).
    pub(crate) fn accumulate(&self, sum_dk: &mut Matrix<u64>, sum_kw: &mut Matrix<u64>) {
        let k = self.k;
        for (j, &d) in self.docs.iter().enumerate() {
            let row = sum_dk.row_mut(d);
            for t in 0..k {
                row[t] += self.n_dk[j * k + t] as u64;
            }
        }
        for w in 0..self.v {
            for t in 0..k {
                let c = self.n_wk[w * k + t];
                if c > 0 {
                    let cur = sum_kw.get(t, w);
                    sum_kw.set(t, w, cur + c as u64);
                }
            }
        }
    }

    /// Checks that document, topic-word and topic totals agree with the token layout.
    pub fn counts_conserved(&self) -> bool {
        let k = self.k;
        let docs_ok = (0..self.docs.len()).all(|j| {
            let n_d = (self.offsets[j + 1] - self.offsets[j]) as u64;
            self.n_dk[j * k..(j + 1) * k].iter().map(|&c| c as u64).sum::<u64>() == n_d
        });
        let topics_ok = (0..k).all(|t| (0..self.v).map(|w| self.n_wk[w * k + t] as u64).sum::<u64>() == self.n_k[t]);
        docs_ok && topics_ok && self.n_k.iter().sum::<u64>() == self.words.len() as u64
    }
}

/// Fold-in sampler: one document against frozen topic-word probabilities.
pub(crate) fn fold_in(
    phi_cols: &[Vec<f64>],
    words: &[u32],
    alpha: f64,
    iterations: usize,
    burn_in: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let k = phi_cols.first().map_or(0, Vec::len);
    let mut z: Vec<usize> = words.iter().map(|_| rng.random_range(0..k)).collect();
    let mut n_dk = vec![0u64; k];
    for &t in &z {
        n_dk[t] += 1;
    }
    let mut sums = vec![0u64; k];
    let mut probs = vec![0.0; k];
    for sweep in 0..iterations {
        for (i, &w) in words.iter().enumerate() {
            let old = z[i];
            n_dk[old] -= 1;
            let col = &phi_cols[w as usize];
            let mut total = 0.0;
            for t in 0..k {
                total += (n_dk[t] as f64 + alpha) * col[t];
                probs[t] = total;
            }
            let u = rng.random::<f64>() * total;
            let new = probs.iter().position(|&c| u < c).unwrap_or(k - 1);
            z[i] = new;
            n_dk[new] += 1;
        }
        if sweep >= burn_in {
            for t in 0..k {
                sums[t] += n_dk[t];
            }
        }
    }
    let kept = (iterations - burn_in) as f64;
    let n_d = words.len() as f64;
    sums.iter().map(|&s| (s as f64 / kept + alpha) / (n_d + k as f64 * alpha)).collect()
}
