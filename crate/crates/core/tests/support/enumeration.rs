//! Exact collapsed-LDA posteriors by brute force over every assignment vector.
//! Weights use rising factorials so nothing here shares code with the sampler.

use std::sync::Arc;

use saqd_core::preprocess::{DocTermMatrix, Vocabulary};
use saqd_core::topic_engine::GibbsSampler;

/// a (a+1) ... (a+n-1)
fn rising(a: f64, n: usize) -> f64 {
    (0..n).map(|i| a + i as f64).product()
}

/// Tokens as (doc, word) in the order the sampler visits them.
pub fn tokens(rows: &[Vec<u32>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (d, row) in rows.iter().enumerate() {
        for (w, &c) in row.iter().enumerate() {
            out.extend(std::iter::repeat_n((d, w), c as usize));
        }
    }
    out
}

pub fn dtm(rows: &[Vec<u32>]) -> DocTermMatrix {
    let v = rows[0].len();
    let vocab = Arc::new(Vocabulary::from_terms((0..v).map(|i| format!("w{i}")).collect()).unwrap());
    DocTermMatrix::from_dense((0..rows.len()).map(|i| format!("d{i}")).collect(), vocab, rows).unwrap()
}

/// Normalised probability of every assignment vector, indexed base-K with token 0 least significant.
pub fn exact_joint(rows: &[Vec<u32>], k: usize, alpha: f64, beta: f64) -> Vec<f64> {
    let toks = tokens(rows);
    let (d_n, v) = (rows.len(), rows[0].len());
    let states = k.pow(toks.len() as u32);
    let mut p = vec![0.0; states];
    for (s, slot) in p.iter_mut().enumerate() {
        let mut ndk = vec![0usize; d_n * k];
        let mut nkw = vec![0usize; k * v];
        let mut nk = vec![0usize; k];
        let mut code = s;
        for &(d, w) in &toks {
            let t = code % k;
            code /= k;
            ndk[d * k + t] += 1;
            nkw[t * v + w] += 1;
            nk[t] += 1;
        }
        let mut weight = 1.0;
        for d in 0..d_n {
            let nd: usize = (0..k).map(|t| ndk[d * k + t]).sum();
            weight *= (0..k).map(|t| rising(alpha, ndk[d * k + t])).product::<f64>() / rising(k as f64 * alpha, nd);
        }
        for t in 0..k {
            weight *= (0..v).map(|w| rising(beta, nkw[t * v + w])).product::<f64>() / rising(v as f64 * beta, nk[t]);
        }
        *slot = weight;
    }
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    p
}

/// Per-token topic marginals and same-topic probability for every token pair.
pub struct Summary {
    pub marginals: Vec<Vec<f64>>,
    pub same: Vec<Vec<f64>>,
}

pub fn summarise_exact(joint: &[f64], n_tokens: usize, k: usize) -> Summary {
    let mut marginals = vec![vec![0.0; k]; n_tokens];
    let mut same = vec![vec![0.0; n_tokens]; n_tokens];
    for (s, &p) in joint.iter().enumerate() {
        let z = decode(s, n_tokens, k);
        accumulate(&z, p, &mut marginals, &mut same);
    }
    Summary { marginals, same }
}

pub fn decode(mut s: usize, n: usize, k: usize) -> Vec<usize> {
    (0..n)
        .map(|_| {
            let t = s % k;
            s /= k;
            t
        })
        .collect()
}

pub fn encode(z: &[u32], k: usize) -> usize {
    z.iter().rev().fold(0, |acc, &t| acc * k + t as usize)
}

fn accumulate(z: &[usize], p: f64, marginals: &mut [Vec<f64>], same: &mut [Vec<f64>]) {
    for (i, &t) in z.iter().enumerate() {
        marginals[i][t] += p;
        for (j, &u) in z.iter().enumerate() {
            if t == u {
                same[i][j] += p;
            }
        }
    }
}

/// Runs one chain and returns the empirical summary plus the visit histogram.
pub fn sample(rows: &[Vec<u32>], k: usize, alpha: f64, beta: f64, seed: u64, burn_in: usize, sweeps: usize) -> (Summary, Vec<f64>) {
    let m = dtm(rows);
    let toks = tokens(rows);
    let mut s = GibbsSampler::new(&m, k, alpha, beta, seed, 0);
    assert_eq!(s.token_words().iter().map(|&w| w as usize).collect::<Vec<_>>(), toks.iter().map(|t| t.1).collect::<Vec<_>>());
    for _ in 0..burn_in {
        s.sweep();
    }
    let n = toks.len();
    let mut marginals = vec![vec![0.0; k]; n];
    let mut same = vec![vec![0.0; n]; n];
    let mut hist = vec![0.0; k.pow(n as u32).min(1 << 20)];
    let w = 1.0 / sweeps as f64;
    for _ in 0..sweeps {
        s.sweep();
        let z: Vec<usize> = s.assignments().iter().map(|&t| t as usize).collect();
        accumulate(&z, w, &mut marginals, &mut same);
        if let Some(h) = hist.get_mut(encode(s.assignments(), k)) {
            *h += w;
        }
    }
    (Summary { marginals, same }, hist)
}

pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Largest total-variation gap over every per-token marginal and every pairwise
/// same-topic indicator.
pub fn max_summary_tv(a: &Summary, b: &Summary) -> f64 {
    let mut worst = 0.0f64;
    for (x, y) in a.marginals.iter().zip(&b.marginals) {
        worst = worst.max(tv(x, y));
    }
    for (x, y) in a.same.iter().zip(&b.same) {
        for (p, q) in x.iter().zip(y) {
            worst = worst.max((p - q).abs());
        }
    }
    worst
}
