use proptest::prelude::*;
use saqd_core::comparative::{jensen_shannon, match_from_divergence, min_cost_assignment, one_way_anova, welch_t_test};
use saqd_core::Matrix;

fn sample(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n)
}

fn distribution(v: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, v).prop_filter("non-zero mass", |x| x.iter().sum::<f64>() > 1e-3).prop_map(|x| {
        let s: f64 = x.iter().sum();
        x.into_iter().map(|y| y / s).collect()
    })
}

fn pooled_t(a: &[f64], b: &[f64]) -> f64 {
    let m = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let ss = |x: &[f64]| {
        let mu = m(x);
        x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>()
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sp2 = (ss(a) + ss(b)) / (na + nb - 2.0);
    (m(a) - m(b)) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

proptest! {
    #[test]
    fn welch_is_antisymmetric(a in sample(2..12), b in sample(2..12)) {
        let ab = welch_t_test(&a, &b);
        let ba = welch_t_test(&b, &a);
        match (ab, ba) {
            (Ok(x), Ok(y)) => {
                prop_assert!((x.statistic + y.statistic).abs() <= 1e-12 * x.statistic.abs().max(1.0));
                prop_assert!((x.df - y.df).abs() <= 1e-9 * x.df);
                prop_assert!((x.p_value - y.p_value).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&x.p_value));
            }
            (Err(x), Err(y)) => prop_assert_eq!(x.code(), y.code()),
            _ => prop_assert!(false, "asymmetric failure"),
        }
    }

    #[test]
    fn two_group_anova_is_pooled_t_squared(a in sample(2..20), b in sample(2..20)) {
        let f = one_way_anova(&[&a, &b]).unwrap();
        let t = pooled_t(&a, &b);
        prop_assert!((f.statistic - t * t).abs() <= 1e-9 * (t * t).max(1.0), "{} vs {}", f.statistic, t * t);
    }

    #[test]
    fn jsd_symmetric_and_bounded((p, q) in (1usize..30).prop_flat_map(|v| (distribution(v), distribution(v)))) {
        let pq = jensen_shannon(&p, &q).unwrap();
        let qp = jensen_shannon(&q, &p).unwrap();
        prop_assert!((pq - qp).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&pq));
        prop_assert!(jensen_shannon(&p, &p).unwrap().abs() < 1e-12);
        if p.iter().zip(&q).any(|(a, b)| (a - b).abs() > 1e-3) {
            prop_assert!(pq > 0.0);
        }
    }

    #[test]
    fn assignment_matches_brute_force(rows in 1usize..=6, cols in 1usize..=6, seed in prop::collection::vec(0u32..1024, 36)) {
        let cost = Matrix::from_vec(rows, cols, (0..rows * cols).map(|i| seed[i] as f64 / 1024.0).collect());
        let got = min_cost_assignment(&cost);
        prop_assert_eq!(got.len(), rows.min(cols));
        let total: f64 = got.iter().map(|&(r, c)| cost.get(r, c)).sum();
        let best = if rows <= cols {
            permutations(cols).iter().map(|p| (0..rows).map(|r| cost.get(r, p[r])).sum::<f64>()).fold(f64::INFINITY, f64::min)
        } else {
            permutations(rows).iter().map(|p| (0..cols).map(|c| cost.get(p[c], c)).sum::<f64>()).fold(f64::INFINITY, f64::min)
        };
        prop_assert_eq!(total, best);
        let m = match_from_divergence(&cost);
        prop_assert_eq!(m.unmatched_a.len() + m.pairs.len(), rows);
        prop_assert_eq!(m.unmatched_b.len() + m.pairs.len(), cols);
    }
}

