use std::sync::Arc;

use proptest::prelude::*;
use saqd_core::coherence::{sweep_k, umass_coherence, CooccurrenceTable};
use saqd_core::preprocess::{DocTermMatrix, Vocabulary};
use saqd_core::topic_engine::TrainConfig;

fn dtm(rows: &[Vec<u32>]) -> DocTermMatrix {
    let v = rows[0].len();
    let vocab = Arc::new(Vocabulary::from_terms((0..v).map(|i| format!("w{i}")).collect()).unwrap());
    DocTermMatrix::from_dense((0..rows.len()).map(|i| format!("d{i}")).collect(), vocab, rows).unwrap()
}

fn rows() -> impl Strategy<Value = Vec<Vec<u32>>> {
    (2usize..15, 3usize..12).prop_flat_map(|(d, v)| prop::collection::vec(prop::collection::vec(prop::sample::select(vec![0u32, 0, 1, 3]), v), d))
}

proptest! {
    #[test]
    fn umass_bounded_and_repeatable(rows in rows(), pick in prop::collection::vec(any::<prop::sample::Index>(), 2..6)) {
        let m = dtm(&rows);
        let table = CooccurrenceTable::build(&m);
        let mut terms: Vec<usize> = pick.iter().map(|i| i.index(m.n_terms())).collect();
        terms.dedup();
        prop_assume!(terms.len() >= 2);
        match umass_coherence::<f64>(&terms, &table) {
            Ok(s) => {
                let pairs = (terms.len() * (terms.len() - 1) / 2) as f64;
                let d = m.n_docs() as f64;
                prop_assert!(s <= pairs * (d + 1.0).ln() + 1e-12);
                prop_assert!(s >= pairs * (1.0 / d).ln() - 1e-12);
                prop_assert_eq!(s, umass_coherence::<f64>(&terms, &table).unwrap());
            }
            Err(e) => prop_assert!(terms.iter().any(|&w| table.df(w) == 0), "{}", e),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sweep_is_repeatable(rows in rows(), seed in any::<u64>()) {
        let m = dtm(&rows);
        prop_assume!(m.token_total >= 4);
        let t = TrainConfig { iterations: 20, burn_in: 10, seed, ..TrainConfig::with_k(2) };
        let a = sweep_k::<f64>(&m, &[4, 2, 3], &t, 5).unwrap();
        let b = sweep_k::<f64>(&m, &[2, 3, 4], &t, 5).unwrap();
        prop_assert_eq!(&a, &b);
        if let Some(best) = a.recommended_k {
            let top = a.per_k[&best].mean;
            prop_assert!(a.per_k.iter().all(|(&k, s)| s.mean < top || (s.mean == top && k >= best)));
        }
    }
}
