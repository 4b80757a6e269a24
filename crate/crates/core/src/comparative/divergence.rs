//! Jensen–Shannon divergence and cross-model topic matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::topic_engine::TopicModel;

/// Fewest shared terms for which topic matching is meaningful.
pub const MIN_SHARED_TERMS: usize = 10;

fn check_distribution<T: Real>(p: &[T]) -> Result<()> {
    if p.iter().any(|&x| x < T::zero() || !x.is_finite()) {
        return Err(Error::InvalidDistribution("negative or non-finite entry".into()));
    }
    let s: T = p.iter().copied().sum();
    if (s - T::one()).abs() > T::of(1e-9).max(T::epsilon() * T::of_usize(p.len().max(1)) * T::of(4.0)) {
        return Err(Error::InvalidDistribution(format!("sums to {s}")));
    }
    Ok(())
}

/// Jensen–Shannon divergence in bits, in [0, 1].
pub fn jensen_shannon<T: Real>(p: &[T], q: &[T]) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::VocabMismatch(format!("lengths {} and {}", p.len(), q.len())));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    let half = T::of(0.5);
    let mut acc = T::zero();
    for (&a, &b) in p.iter().zip(q) {
        let m = (a + b) * half;
        if a > T::zero() {
            acc += a * (a / m).log2();
        }
        if b > T::zero() {
            acc += b * (b / m).log2();
        }
    }
    Ok((acc * half).max(T::zero()).min(T::one()))
}

/// Minimum-cost assignment on a rectangular cost matrix (Hungarian method with
/// shortest augmenting paths). Returns `(row, col)` pairs sorted by row; the
/// smaller side is fully matched.
pub fn min_cost_assignment<T: Real>(cost: &Matrix<T>) -> Vec<(usize, usize)> {
    let (rows, cols) = (cost.rows(), cost.cols());
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    if rows > cols {
        let transposed = Matrix::from_vec(cols, rows, (0..cols).flat_map(|c| cost.column(c).collect::<Vec<_>>()).collect());
        let mut pairs: Vec<(usize, usize)> = min_cost_assignment(&transposed).into_iter().map(|(c, r)| (r, c)).collect();
        pairs.sort_unstable();
        return pairs;
    }
    let (n, m) = (rows, cols);
    let inf = T::infinity();
    // 1-based potentials; column 0 is the virtual start
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m).filter(|&j| owner[j] != 0).map(|j| (owner[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair<T> {
    pub topic_a: usize,
    pub topic_b: usize,
    pub divergence: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMatch<T> {
    pub pairs: Vec<MatchedPair<T>>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
    pub total_divergence: T,
    pub shared_vocab_size: usize,
    /// Probability mass of each topic on terms outside the shared vocabulary.
    pub lost_mass_a: Vec<T>,
    pub lost_mass_b: Vec<T>,
}

/// Optimal partial bijection for a precomputed K_A×K_B divergence matrix.
pub fn match_from_divergence<T: Real>(div: &Matrix<T>) -> TopicMatch<T> {
    let assignment = min_cost_assignment(div);
    let pairs: Vec<MatchedPair<T>> = assignment
        .iter()
        .map(|&(a, b)| MatchedPair { topic_a: a, topic_b: b, divergence: div.get(a, b) })
        .collect();
    let total = pairs.iter().map(|p| p.divergence).sum();
    let unmatched_a = (0..div.rows()).filter(|a| !assignment.iter().any(|p| p.0 == *a)).collect();
    let unmatched_b = (0..div.cols()).filter(|b| !assignment.iter().any(|p| p.1 == *b)).collect();
    TopicMatch {
        pairs,
        unmatched_a,
        unmatched_b,
        total_divergence: total,
        shared_vocab_size: 0,
        lost_mass_a: Vec::new(),
        lost_mass_b: Vec::new(),
    }
}

/// Phi restricted to `terms` and renormalised, plus the mass dropped per topic.
fn project<T: Real>(model: &TopicModel<T>, terms: &[&str]) -> (Matrix<T>, Vec<T>) {
    let idx: Vec<usize> = terms.iter().map(|t| model.vocab.get(t).expect("shared term")).collect();
    let mut out = Matrix::filled(model.k(), terms.len(), T::zero());
    let mut lost = Vec::with_capacity(model.k());
    for t in 0..model.k() {
        let row = model.phi.row(t);
        let kept: T = idx.iter().map(|&w| row[w]).sum();
        for (j, &w) in idx.iter().enumerate() {
            out.set(t, j, row[w] / kept);
        }
        lost.push((T::one() - kept).max(T::zero()));
    }
    (out, lost)
}

/// Matches topics of two models by minimum total Jensen–Shannon divergence
/// over their shared vocabulary.
pub fn match_topics<T: Real>(a: &TopicModel<T>, b: &TopicModel<T>) -> Result<TopicMatch<T>> {
    let shared: Vec<&str> = a.vocab.terms().iter().map(String::as_str).filter(|t| b.vocab.get(t).is_some()).collect();
    if shared.len() < MIN_SHARED_TERMS {
        return Err(Error::TinySharedVocab { shared: shared.len(), required: MIN_SHARED_TERMS });
    }
    let (pa, lost_a) = project(a, &shared);
    let (pb, lost_b) = project(b, &shared);
    let mut div = Matrix::filled(a.k(), b.k(), T::zero());
    for i in 0..a.k() {
        for j in 0..b.k() {
            div.set(i, j, jensen_shannon(pa.row(i), pb.row(j))?);
        }
    }
    let mut m = match_from_divergence(&div);
    m.shared_vocab_size = shared.len();
    m.lost_mass_a = lost_a;
    m.lost_mass_b = lost_b;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsd_fixtures() {
        assert_eq!(jensen_shannon::<f64>(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((jensen_shannon::<f64>(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        let x = jensen_shannon::<f64>(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((x - 0.31128).abs() < 1e-5, "{x}");
        assert!(matches!(jensen_shannon::<f64>(&[1.0], &[0.5, 0.5]), Err(Error::VocabMismatch(_))));
        assert!(matches!(jensen_shannon::<f64>(&[0.5, 0.6], &[0.5, 0.5]), Err(Error::InvalidDistribution(_))));
    }

    #[test]
    fn assignment_fixtures() {
        let m = match_from_divergence(&Matrix::<f64>::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]));
        assert_eq!(m.pairs.iter().map(|p| (p.topic_a, p.topic_b)).collect::<Vec<_>>(), vec![(0, 0), (1, 1)]);
        assert_eq!(m.total_divergence, 0.0);
        let m = match_from_divergence(&Matrix::<f64>::from_rows(&[vec![0.2, 0.1], vec![0.3, 0.9]]));
        assert_eq!(m.pairs.iter().map(|p| (p.topic_a, p.topic_b, p.divergence)).collect::<Vec<_>>(), vec![(0, 1, 0.1), (1, 0, 0.3)]);
        assert!((m.total_divergence - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rectangular_assignment_leaves_unmatched() {
        let m = match_from_divergence(&Matrix::<f64>::from_rows(&[vec![0.5, 0.1], vec![0.2, 0.6], vec![0.05, 0.07]]));
        assert_eq!(m.pairs.len(), 2);
        assert_eq!(m.unmatched_a.len(), 1);
        assert!(m.unmatched_b.is_empty());
        // best: (0,1)=0.1 + (2,0)=0.05
        assert_eq!(m.unmatched_a, vec![1]);
        let wide = match_from_divergence(&Matrix::<f64>::from_rows(&[vec![0.5, 0.1, 0.3]]));
        assert_eq!(wide.unmatched_b, vec![0, 2]);
    }
}
