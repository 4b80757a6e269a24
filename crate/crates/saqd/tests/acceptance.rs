//! Acceptance suite. Runs every primary criterion at its stated tolerance and
//! prints one PASS/FAIL line each; exits non-zero if any criterion fails.

#[path = "../../core/tests/support/enumeration.rs"]
mod enumeration;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use saqd_core::coherence::{recommend_k, umass_coherence_terms, CooccurrenceTable};
use saqd_core::comparative::{jensen_shannon, match_topics, one_way_anova, t_two_sided_p, welch_t_test};
use saqd_core::interpretation::CodingSession;
use saqd_core::preprocess::{DocTermMatrix, Vocabulary};
use saqd_core::project::{Project, RunOverrides, RunStatus};
use saqd_core::topic_engine::{train_lda, train_lda_with_threads, GibbsSampler, TopicModel, TrainConfig};
use saqd_core::Matrix;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dense_dtm(rows: &[Vec<u32>]) -> DocTermMatrix {
    enumeration::dtm(rows)
}

fn corpus(max_d: usize, max_v: usize) -> impl Strategy<Value = Vec<Vec<u32>>> {
    (1..=max_d, 1..=max_v).prop_flat_map(|(d, v)| prop::collection::vec(prop::collection::vec(prop::sample::select(vec![0u32, 0, 0, 1, 2, 4]), v), d))
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() })
}

fn gibbs_enumeration() -> Outcome {
    let started = Instant::now();
    let rows = vec![vec![2, 0], vec![0, 2]];
    let joint = enumeration::exact_joint(&rows, 2, 0.5, 0.1);
    check(joint.len() == 16, || "expected 16 assignments".into())?;
    let exact = enumeration::summarise_exact(&joint, 4, 2);
    let (emp, _) = enumeration::sample(&rows, 2, 0.5, 0.1, 2024, 1000, 20_000);
    let gap = enumeration::max_summary_tv(&emp, &exact);
    let secs = started.elapsed().as_secs_f64();
    check(gap < 0.05, || format!("TV gap {gap:.4} >= 0.05"))?;
    check(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("max TV {gap:.4}, P(same topic in doc1) exact {:.4} vs {:.4}, {secs:.2}s", exact.same[0][1], emp.same[0][1]))
}

fn k1_analytic() -> Outcome {
    let beta = 0.1;
    runner(200)
        .run(&corpus(30, 40), |rows| {
            let m = dense_dtm(&rows);
            prop_assume!(m.token_total > 0);
            let model: TopicModel = train_lda(&m, &TrainConfig { k: 1, alpha: 0.5, beta, iterations: 10, burn_in: 5, seed: 1, chains: 1 }).unwrap();
            let n = m.token_total as f64;
            let v = m.n_terms() as f64;
            for w in 0..m.n_terms() {
                let nw: f64 = (0..m.n_docs()).map(|d| m.count(d, w) as f64).sum();
                prop_assert!((model.phi.get(0, w) - (nw + beta) / (n + v * beta)).abs() <= 1e-12);
            }
            prop_assert!(model.theta.iter_rows().all(|r| r == [1.0]));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("200 random corpora".into())
}

fn normalization() -> Outcome {
    runner(100)
        .run(&(corpus(50, 100), 1usize..=10, any::<u64>()), |(rows, k, seed)| {
            let m = dense_dtm(&rows);
            prop_assume!(m.token_total >= k as u64);
            let cfg = TrainConfig { k, alpha: 0.2, beta: 0.05, iterations: 10, burn_in: 5, seed, chains: 1 };
            let model: TopicModel = train_lda(&m, &cfg).unwrap();
            for r in model.phi.iter_rows().chain(model.theta.iter_rows()) {
                prop_assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
            let mut s = GibbsSampler::new(&m, k, 0.2, 0.05, seed, 0);
            for _ in 0..10 {
                s.sweep();
                prop_assert!(s.counts_conserved());
                prop_assert_eq!(s.topic_totals().iter().sum::<u64>(), m.token_total);
                let ndk = s.doc_topic_counts();
                for d in 0..m.n_docs() {
                    prop_assert_eq!(ndk.row(d).iter().map(|&c| c as u64).sum::<u64>(), m.doc_len(d));
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("100 random corpora, D<=50 V<=100 K<=10".into())
}

fn desk_jsonl(docs: usize, seed: u64) -> String {
    let words = ["fares", "surge", "pricing", "drivers", "couriers", "orders", "ratings", "food", "app", "deliver", "shift", "boss", "tips", "late", "rider"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..docs)
        .map(|i| {
            let block = if i % 2 == 0 { &words[..8] } else { &words[5..] };
            let text: Vec<&str> = (0..30).map(|_| *block.choose(&mut rng).unwrap()).collect();
            let ctx = if i % 2 == 0 { "ride" } else { "food" };
            serde_json::json!({"id": format!("d{i}"), "text": text.join(" "), "source_study": "s1", "context": ctx, "timestamp": format!("{}-06-01", 2018 + i % 4)}).to_string() + "\n"
        })
        .collect()
}

fn read_artifact(p: &Project, run: &str, file: &str) -> Vec<u8> {
    std::fs::read(p.artifacts_dir(run).join(file)).unwrap()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = Project::init(dir.path(), Some("det")).map_err(|e| e.to_string())?;
    p.ingest("c", desk_jsonl(40, 5).as_bytes(), false, None).map_err(|e| e.to_string())?;
    p.create_assemblage("all", &[], "*").map_err(|e| e.to_string())?;
    let base = RunOverrides { k: Some(4), iterations: Some(300), seed: Some(11), chains: Some(3), ..Default::default() };
    let mut ids = Vec::new();
    for threads in [None, Some(1), Some(4)] {
        let rec = p.run_pipeline(None, Some("all"), &RunOverrides { threads, ..base.clone() }).map_err(|e| e.to_string())?;
        check(rec.status == RunStatus::Done, || format!("{:?}", rec.error))?;
        ids.push(rec.id);
    }
    for file in ["model/phi.csv", "model/theta.csv"] {
        let first = read_artifact(&p, &ids[0], file);
        for id in &ids[1..] {
            check(read_artifact(&p, id, file) == first, || format!("{file} differs between {} and {id}", ids[0]))?;
        }
    }
    // the bare engine too
    let m = dense_dtm(&[vec![3, 1, 0, 2], vec![0, 2, 4, 1], vec![1, 0, 1, 5]]);
    let cfg = TrainConfig { k: 3, alpha: 0.3, beta: 0.1, iterations: 100, burn_in: 50, seed: 99, chains: 4 };
    let a: TopicModel = train_lda_with_threads(&m, &cfg, 1).unwrap();
    let b: TopicModel = train_lda_with_threads(&m, &cfg, 3).unwrap();
    check(a.phi.as_slice() == b.phi.as_slice() && a.theta.as_slice() == b.theta.as_slice(), || "engine output depends on threads".into())?;
    Ok("phi.csv/theta.csv identical across 3 runs (default, 1, 4 threads)".into())
}

fn coherence_fixtures() -> Outcome {
    let table = |rows: Vec<Vec<u32>>| {
        let vocab = Arc::new(Vocabulary::from_terms(vec!["w1".into(), "w2".into()]).unwrap());
        CooccurrenceTable::build(&DocTermMatrix::from_dense((0..rows.len()).map(|i| format!("d{i}")).collect(), vocab, &rows).unwrap())
    };
    let mut never = vec![vec![1, 0]; 5];
    never.push(vec![0, 1]);
    let fixtures = [
        (table(vec![vec![1, 1], vec![1, 1], vec![1, 0], vec![1, 0]]), -0.28768),
        (table(vec![vec![1, 1]; 4]), 0.22314),
        (table(never), -1.60944),
    ];
    let mut got = Vec::new();
    for (t, want) in &fixtures {
        let s: f64 = umass_coherence_terms(&["w1", "w2"], t).map_err(|e| e.to_string())?;
        // fixtures are quoted to 5 decimals; the exact values are ln(3/4), ln(5/4), ln(1/5)
        check((s - want).abs() < 1e-5, || format!("{s} vs {want}"))?;
        got.push(s);
    }
    let exact = [(0.75f64).ln(), (1.25f64).ln(), (0.2f64).ln()];
    for (s, e) in got.iter().zip(exact) {
        check((s - e).abs() < 1e-9, || format!("{s} vs exact {e}"))?;
    }
    let tables: [(&[(usize, f64)], Option<usize>); 4] = [
        (&[(5, -1.2), (10, -0.8), (15, -0.9)], Some(10)),
        (&[(5, -0.8), (10, -0.8), (15, -0.9)], Some(5)),
        (&[(15, -0.5), (20, -0.5), (10, -0.7)], Some(15)),
        (&[], None),
    ];
    for (scores, want) in tables {
        let means: BTreeMap<usize, f64> = scores.iter().copied().collect();
        check(recommend_k(&means) == want, || format!("recommend_k({scores:?}) = {:?}, want {want:?}", recommend_k(&means)))?;
    }
    Ok(format!("scores {:.5} {:.5} {:.5}; tie-break picks smallest K", got[0], got[1], got[2]))
}

fn pooled_t(a: &[f64], b: &[f64]) -> f64 {
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let ss = |x: &[f64]| x.iter().map(|v| (v - mean(x)).powi(2)).sum::<f64>();
    let (na, nb) = (a.len() as f64, b.len() as f64);
    (mean(a) - mean(b)) / ((ss(a) + ss(b)) / (na + nb - 2.0) * (1.0 / na + 1.0 / nb)).sqrt()
}

fn statistics() -> Outcome {
    let r = welch_t_test::<f64>(&[0.2, 0.3, 0.25], &[0.6, 0.7, 0.65]).map_err(|e| e.to_string())?;
    check((r.statistic + 9.798).abs() <= 0.001, || format!("t = {}", r.statistic))?;
    check((r.df - 4.0).abs() < 1e-9, || format!("df = {}", r.df))?;
    let p: f64 = t_two_sided_p(2.776, 4.0);
    check((p - 0.05).abs() <= 0.002, || format!("p = {p}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let na = rng.random_range(2..20);
        let nb = rng.random_range(2..20);
        let a: Vec<f64> = (0..na).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..nb).map(|_| rng.random::<f64>() + 0.1).collect();
        let f = one_way_anova(&[&a, &b]).map_err(|e| e.to_string())?.statistic;
        let t2 = pooled_t(&a, &b).powi(2);
        let rel = (f - t2).abs() / t2.max(1.0);
        worst = worst.max(rel);
        check(rel <= 1e-9, || format!("F {f} vs t^2 {t2}"))?;
    }
    Ok(format!("t = {:.4}, df = {}, p(2.776, 4) = {p:.4}, ANOVA vs t^2 worst {worst:.1e}", r.statistic, r.df))
}

fn jsd_oracle(p: &[f64], q: &[f64]) -> f64 {
    let kl = |a: &[f64], m: &[f64]| a.iter().zip(m).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * (x / y).log2()).sum::<f64>();
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    0.5 * kl(p, &m) + 0.5 * kl(q, &m)
}

fn brute_force(cost: &[Vec<f64>]) -> f64 {
    let (r, c) = (cost.len(), cost[0].len());
    fn go(row: usize, used: &mut Vec<bool>, cost: &[Vec<f64>], acc: f64, best: &mut f64) {
        if row == cost.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                go(row + 1, used, cost, acc + cost[row][j], best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    if r <= c {
        go(0, &mut vec![false; c], cost, 0.0, &mut best);
    } else {
        let t: Vec<Vec<f64>> = (0..c).map(|j| (0..r).map(|i| cost[i][j]).collect()).collect();
        go(0, &mut vec![false; r], &t, 0.0, &mut best);
    }
    best
}

fn model_with(terms: &[String], phi: Vec<Vec<f64>>) -> TopicModel {
    let vocab = Arc::new(Vocabulary::from_terms(terms.to_vec()).unwrap());
    let k = phi.len();
    TopicModel::from_estimates(TrainConfig::with_k(k), vocab, vec!["d".into()], Matrix::from_rows(&phi), Matrix::from_rows(&[vec![1.0 / k as f64; k]])).unwrap()
}

fn jsd_matching() -> Outcome {
    let p = [0.1, 0.2, 0.3, 0.4];
    let same: f64 = jensen_shannon(&p, &p).map_err(|e| e.to_string())?;
    check(same.abs() <= 1e-12, || format!("JSD(p,p) = {same}"))?;
    let disjoint: f64 = jensen_shannon(&[0.5, 0.5, 0.0, 0.0], &[0.0, 0.0, 0.25, 0.75]).map_err(|e| e.to_string())?;
    check((disjoint - 1.0).abs() <= 1e-12, || format!("disjoint JSD = {disjoint}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let v = 12;
    let terms: Vec<String> = (0..v).map(|i| format!("t{i:02}")).collect();
    let instances = 300;
    for _ in 0..instances {
        let ka = rng.random_range(1..=6);
        let kb = rng.random_range(1..=6);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let x: Vec<f64> = (0..v).map(|_| rng.random::<f64>().powi(3) + 1e-3).collect();
            let s: f64 = x.iter().sum();
            x.into_iter().map(|y| y / s).collect()
        };
        let phi_a: Vec<Vec<f64>> = (0..ka).map(|_| draw(&mut rng)).collect();
        let phi_b: Vec<Vec<f64>> = (0..kb).map(|_| draw(&mut rng)).collect();
        // model B lists the same terms in a shuffled order
        let mut order: Vec<usize> = (0..v).collect();
        order.shuffle(&mut rng);
        let terms_b: Vec<String> = order.iter().map(|&i| terms[i].clone()).collect();
        let phi_b_shuffled: Vec<Vec<f64>> = phi_b.iter().map(|r| order.iter().map(|&i| r[i]).collect()).collect();
        let m = match_topics(&model_with(&terms, phi_a.clone()), &model_with(&terms_b, phi_b_shuffled)).map_err(|e| e.to_string())?;
        let cost: Vec<Vec<f64>> = phi_a.iter().map(|a| phi_b.iter().map(|b| jsd_oracle(a, b)).collect()).collect();
        let best = brute_force(&cost);
        let got: f64 = m.pairs.iter().map(|x| cost[x.topic_a][x.topic_b]).sum();
        check(m.pairs.len() == ka.min(kb), || format!("{} pairs for {ka}x{kb}", m.pairs.len()))?;
        check((got - best).abs() <= 1e-12, || format!("{ka}x{kb}: matched {got} vs optimum {best}"))?;
        check((m.total_divergence - best).abs() <= 1e-9, || format!("reported total {} vs {best}", m.total_divergence))?;
    }
    Ok(format!("JSD(p,p) = {same:e}, disjoint = {disjoint}, {instances} random K<=6 instances optimal"))
}

/// Synthetic corpus: 20 planted topics over a 5,000-word alphabetic vocabulary.
fn scale_corpus(docs: usize, tokens: usize, vocab: usize, topics: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let letters: Vec<char> = "bcdfghjklmnpqrstvwxz".chars().collect();
    let vowels: Vec<char> = "aeiou".chars().collect();
    let word = |mut i: usize| {
        let mut s = String::from("q");
        for _ in 0..3 {
            s.push(letters[i % letters.len()]);
            i /= letters.len();
            s.push(vowels[i % vowels.len()]);
            i /= vowels.len();
        }
        s
    };
    let words: Vec<String> = (0..vocab).map(word).collect();
    let block = vocab / topics;
    let zipf = WeightedIndex::new((1..=block).map(|r| 1.0 / r as f64)).unwrap();
    let mut out = String::new();
    for d in 0..docs {
        let main = rng.random_range(0..topics);
        let second = rng.random_range(0..topics);
        let text: Vec<&str> = (0..tokens)
            .map(|_| {
                let u: f64 = rng.random();
                let w = if u < 0.2 {
                    rng.random_range(0..vocab)
                } else {
                    let t = if u < 0.75 { main } else { second };
                    t * block + zipf.sample(&mut rng)
                };
                words[w].as_str()
            })
            .collect();
        let rec = serde_json::json!({"id": format!("doc{d:04}"), "text": text.join(" "), "source_study": format!("s{}", d % 3), "context": if d % 2 == 0 { "a" } else { "b" }, "timestamp": format!("{}-01-15", 2015 + d % 8)});
        out.push_str(&rec.to_string());
        out.push('\n');
    }
    out
}

fn scale_reproducibility() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = Project::init(dir.path(), Some("scale")).map_err(|e| e.to_string())?;
    p.ingest("synthetic", scale_corpus(1000, 200, 5000, 20, 17).as_bytes(), false, None).map_err(|e| e.to_string())?;
    p.create_assemblage("all", &[], "*").map_err(|e| e.to_string())?;
    let o = RunOverrides { k: Some(20), iterations: Some(1000), burn_in: Some(500), seed: Some(2024), ..Default::default() };
    let started = Instant::now();
    let a = p.run_pipeline(None, Some("all"), &o).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    check(a.status == RunStatus::Done, || format!("{:?}", a.error))?;
    let b = p.run_pipeline(None, Some("all"), &o).map_err(|e| e.to_string())?;
    check(b.status == RunStatus::Done, || format!("{:?}", b.error))?;
    let stats = a.stats.as_ref().ok_or("missing stats")?;
    let v = p.load_run(&a.id).map_err(|e| e.to_string())?.model.n_terms();
    check((4500..=5000).contains(&v), || format!("vocabulary {v}"))?;
    check(a.artifacts == b.artifacts && a.manifest_sha256 == b.manifest_sha256, || "artifact hashes differ".into())?;
    check(secs < 300.0, || format!("first run took {secs:.1}s"))?;
    Ok(format!("1000 docs, {} tokens, V={v}, K=20, 1000 sweeps in {secs:.1}s; {} artifacts identical on rerun", stats_tokens(stats), a.artifacts.len()))
}

fn stats_tokens(stats: &saqd_core::project::RunStats) -> String {
    serde_json::to_value(stats).ok().and_then(|v| v.get("tokens").cloned()).map(|t| t.to_string()).unwrap_or_else(|| "?".into())
}

struct Saqd<'a> {
    project: &'a Path,
}

impl Saqd<'_> {
    fn run(&self, args: &[&str]) -> Result<Value, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_saqd")).arg("--project").arg(self.project).arg("--json").args(args).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("saqd {} exited {:?}: {}", args.join(" "), out.status.code(), String::from_utf8_lossy(&out.stderr)));
        }
        serde_json::from_slice(&out.stdout).map_err(|e| format!("saqd {}: {e}", args.join(" ")))
    }

    fn fails_with(&self, args: &[&str], code: &str) -> Result<(), String> {
        let out = Command::new(env!("CARGO_BIN_EXE_saqd")).arg("--project").arg(self.project).arg("--json").args(args).output().map_err(|e| e.to_string())?;
        let err: Value = serde_json::from_slice(&out.stderr).map_err(|e| e.to_string())?;
        check(out.status.code() == Some(1) && err["code"] == code, || format!("saqd {}: {:?} {err}", args.join(" "), out.status.code()))
    }
}

fn interpretation_loop() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().join("proj");
    let input = dir.path().join("desk.jsonl");
    std::fs::write(&input, desk_jsonl(24, 3)).map_err(|e| e.to_string())?;
    let cli = Saqd { project: &root };
    Command::new(env!("CARGO_BIN_EXE_saqd")).arg("init").arg(&root).output().map_err(|e| e.to_string())?;
    cli.run(&["ingest", "--corpus", "desk", "--input", input.to_str().unwrap()])?;
    cli.run(&["assemble", "--name", "all"])?;
    let first = cli.run(&["train", "--assemblage", "all", "--k", "3", "--iters", "300", "--seed", "5"])?;
    let run = first["id"].as_str().ok_or("no run id")?.to_string();
    let k = first["k"].as_u64().ok_or("no k")? as usize;

    let session = cli.run(&["label", "open", "--run", &run, "--coders", "ana,bo"])?;
    let sid = session["id"].as_str().ok_or("no session id")?.to_string();
    for t in 0..k {
        let topic = t.to_string();
        cli.run(&["label", "submit", "--session", &sid, "--coder", "ana", "--topic", &topic, "--label", &format!("Theme {t}")])?;
        let bo_label = if t == 1 { "something else".to_string() } else { format!("theme  {t}") };
        let r = cli.run(&["label", "submit", "--session", &sid, "--coder", "bo", "--topic", &topic, "--label", &bo_label])?;
        let want = if t == 1 { "disputed" } else { "consensus" };
        check(r["status"] == want, || format!("topic {t}: {r}"))?;
    }
    cli.fails_with(&["label", "submit", "--session", &sid, "--coder", "eve", "--topic", "0", "--label", "x"], "UNKNOWN_CODER")?;
    let fb = cli.run(&["label", "stopwords", "--session", &sid, "--words", "app,Tips", "--note", "too generic", "--actor", "ana"])?;
    let fb_id = fb["id"].as_str().ok_or("no feedback id")?.to_string();
    cli.fails_with(&["label", "finalize", "--session", &sid], "UNRESOLVED_TOPICS")?;
    let ls = cli.run(&["label", "finalize", "--session", &sid, "--resolve", "1=platform work", "--auditor", "aud", "--audit-note", "checked"])?;
    let labels = ls["labels"].as_object().ok_or("no labels")?;
    check(labels.len() == k, || format!("label set covers {} of {k} topics", labels.len()))?;
    check(ls["labels"]["1"] == "platform work", || format!("{ls}"))?;

    let p = Project::open(&root).map_err(|e| e.to_string())?;
    let stored = p.session(&sid).map_err(|e| e.to_string())?;
    let replayed = CodingSession::replay(sid.clone(), &stored.audit).map_err(|e| e.to_string())?;
    check(replayed == stored, || "replayed session differs from stored state".into())?;
    let shown = cli.run(&["label", "show", "--session", &sid])?;
    check(serde_json::to_value(&replayed).unwrap() == shown, || "CLI session view differs from replay".into())?;

    let second = cli.run(&["train", "--assemblage", "all", "--k", "3", "--iters", "300", "--seed", "5", "--apply-feedback", &fb_id])?;
    let stoplist = |v: &Value| -> BTreeSet<String> { v["preprocess"]["stoplist"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect() };
    let flagged: BTreeSet<String> = fb["words"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect();
    let union: BTreeSet<String> = stoplist(&first).union(&flagged).cloned().collect();
    check(stoplist(&second) == union, || "new stoplist is not old stoplist plus flagged words".into())?;
    check(second["feedback_consumed"] == serde_json::json!([fb_id]), || format!("{}", second["feedback_consumed"]))?;
    check(second["parent_runs"] == serde_json::json!([run]), || format!("{}", second["parent_runs"]))?;
    let stored_run = p.run(second["id"].as_str().unwrap()).map_err(|e| e.to_string())?;
    check(stored_run.preprocess.stoplist == union, || "persisted run record disagrees".into())?;
    Ok(format!("K={k}, 1 disputed topic resolved, {} flagged words applied in {}", flagged.len(), stored_run.id))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gibbs_vs_enumeration", gibbs_enumeration),
        ("k1_analytic", k1_analytic),
        ("normalization_suite", normalization),
        ("determinism", determinism),
        ("coherence_fixtures", coherence_fixtures),
        ("statistics_oracle", statistics),
        ("jsd_and_matching", jsd_matching),
        ("pipeline_scale_reproducibility", scale_reproducibility),
        ("interpretation_loop_cli", interpretation_loop),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panic".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {name} ({secs:.1}s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {msg}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
