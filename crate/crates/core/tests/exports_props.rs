use std::sync::Arc;

use proptest::prelude::*;
use saqd_core::exports::{export_prevalence, export_wordcloud, verify_manifest, Bundle};
use saqd_core::preprocess::Vocabulary;
use saqd_core::topic_engine::{TopicModel, TrainConfig};
use saqd_core::Matrix;

fn simplex_rows(n: usize, k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, k), n).prop_map(|rows| {
        rows.into_iter().map(|r| {
            let s: f64 = r.iter().sum();
            r.into_iter().map(|x| x / s).collect()
        }).collect()
    })
}

fn model(phi: Vec<Vec<f64>>, theta: Vec<Vec<f64>>) -> TopicModel {
    let v = phi[0].len();
    let vocab = Arc::new(Vocabulary::from_terms((0..v).map(|i| format!("w{i}")).collect()).unwrap());
    let ids = (0..theta.len()).map(|i| format!("d{i}")).collect();
    TopicModel::from_estimates(TrainConfig::with_k(phi.len()), vocab, ids, Matrix::from_rows(&phi), Matrix::from_rows(&theta)).unwrap()
}

proptest! {
    #[test]
    fn prevalence_is_column_mean((phi, theta) in (1usize..6, 1usize..40).prop_flat_map(|(k, d)| (simplex_rows(k, 8), simplex_rows(d, k)))) {
        let m = model(phi, theta.clone());
        let p = export_prevalence(&m);
        for (k, got) in p.iter().enumerate() {
            let mut col: Vec<f64> = theta.iter().map(|r| r[k]).collect();
            col.sort_by(f64::total_cmp);
            let want = col.iter().sum::<f64>() / theta.len() as f64;
            prop_assert!((got - want).abs() < 1e-12);
        }
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn wordcloud_is_sorted_top_m(phi in simplex_rows(3, 12), n in 1usize..20) {
        let theta = vec![vec![1.0 / 3.0; 3]];
        let m = model(phi.clone(), theta);
        for t in 0..3 {
            let cloud = export_wordcloud(&m, None, t, n).unwrap();
            prop_assert_eq!(cloud.entries.len(), n.min(12));
            prop_assert!(cloud.entries.windows(2).all(|w| w[0].weight >= w[1].weight));
            let mut sorted = phi[t].clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            prop_assert_eq!(cloud.entries[0].weight, sorted[0]);
        }
    }

    #[test]
    fn bundle_manifest_verifies(files in prop::collection::btree_map("[a-z]{1,6}(/[a-z]{1,6})?\\.txt", prop::collection::vec(any::<u8>(), 0..64), 1..6)) {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("bundle");
        let mut b = Bundle::default();
        for (p, bytes) in &files {
            b.add(p.clone(), bytes.clone());
        }
        let entries = b.write(&out).unwrap();
        prop_assert_eq!(entries.len(), files.len());
        verify_manifest(&out).unwrap();
        let again = b.manifest();
        prop_assert_eq!(entries, again);
    }
}
