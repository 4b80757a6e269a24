use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, TimeZone, Utc};
use proptest::prelude::*;
use saqd_core::interpretation::{topic_status, CodingSession, TopicStatus};

const CODERS: [&str; 3] = ["ana", "bo", "cy"];
const LABELS: [&str; 4] = ["pay", "Pay ", "surge  pricing", "ratings"];

#[derive(Debug, Clone)]
enum Step {
    Label { coder: usize, topic: usize, label: usize },
    Stopwords(BTreeSet<String>),
}

fn step(k: usize) -> impl Strategy<Value = Step> {
    prop_oneof![
        4 => (0..CODERS.len(), 0..k + 1, 0..LABELS.len()).prop_map(|(coder, topic, label)| Step::Label { coder, topic, label }),
        1 => prop::collection::btree_set("[a-z]{0,4}", 0..3).prop_map(Step::Stopwords),
    ]
}

fn at(i: usize) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap() + chrono::Duration::seconds(i as i64)
}

proptest! {
    #[test]
    fn audit_grows_and_replays((k, steps) in (1usize..5).prop_flat_map(|k| (Just(k), prop::collection::vec(step(k), 0..40)))) {
        let coders: Vec<String> = CODERS.iter().map(|s| s.to_string()).collect();
        let mut s = CodingSession::open("s-0001", "run-0001", k, &coders, "lead", at(0)).unwrap();
        for (i, st) in steps.iter().enumerate() {
            let before = s.audit.clone();
            let ok = match st {
                Step::Label { coder, topic, label } => s.submit_label(CODERS[*coder], *topic, LABELS[*label], at(i + 1)).is_ok(),
                Step::Stopwords(w) => s.flag_stopwords(w, "", "lead", at(i + 1)).map(|r| r.is_some()).unwrap_or(false),
            };
            prop_assert_eq!(&s.audit[..before.len()], &before[..]);
            prop_assert_eq!(s.audit.len(), before.len() + ok as usize);
            for t in 0..k {
                let labels = s.labels.get(&t).cloned().unwrap_or_default();
                prop_assert_eq!(s.status[t], topic_status(&s.coders, &labels));
            }
        }
        prop_assert!(s.audit.iter().enumerate().all(|(i, e)| e.seq == i));
        prop_assert_eq!(&CodingSession::replay(s.id.clone(), &s.audit).unwrap(), &s);

        let resolutions: BTreeMap<usize, String> = (0..k).filter(|t| s.status[*t] != TopicStatus::Consensus).map(|t| (t, format!("resolved {t}"))).collect();
        let ls = s.finalize_labels(&resolutions, "lead", None, at(999)).unwrap();
        prop_assert_eq!(ls.labels.len(), k);
        prop_assert!(ls.labels.values().all(|l| !l.trim().is_empty()));
        prop_assert_eq!(&CodingSession::replay(s.id.clone(), &s.audit).unwrap(), &s);
        let frozen = s.audit.clone();
        prop_assert!(s.submit_label("ana", 0, "late", at(1000)).is_err());
        prop_assert_eq!(s.audit, frozen);
    }

    #[test]
    fn status_ignores_case_and_spacing(labels in prop::collection::vec(prop::sample::select(LABELS.to_vec()), 0..=3)) {
        let coders: Vec<String> = CODERS.iter().map(|s| s.to_string()).collect();
        let map: BTreeMap<String, String> = coders.iter().cloned().zip(labels.iter().map(|s| s.to_string())).collect();
        let s = topic_status(&coders, &map);
        let want = if labels.len() < 3 {
            TopicStatus::Open
        } else if labels.iter().all(|l| ["pay", "Pay "].contains(l)) || labels.iter().all(|l| *l == labels[0]) {
            TopicStatus::Consensus
        } else {
            TopicStatus::Disputed
        };
        prop_assert_eq!(s, want);
        prop_assert_eq!(s, topic_status(&coders, &map));
    }
}
