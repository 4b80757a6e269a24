//! On-disk model artifacts.
//!
//! * `phi.csv`: K rows of V comma-separated values, 12 significant digits.
//! * `theta.csv`: D rows of K values, same precision.
//! * `assignments.bin`: little-endian `u32` topic per token. Documents follow
//!   matrix row order; within a document tokens are ordered by ascending term
//!   index, each term repeated by its count. No header.
//! * `train_log.csv`: `chain,sweep,log_likelihood`, sweeps numbered from 1.
//! * `vocab.txt`, `doc_ids.txt`: one entry per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::preprocess::DocTermMatrix;
use crate::scalar::{fmt_significant, Real};
use crate::topic_engine::{SufficientStats, TopicModel, TrainConfig};

pub const PHI_FILE: &str = "phi.csv";
pub const THETA_FILE: &str = "theta.csv";
pub const ASSIGNMENTS_FILE: &str = "assignments.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const DOC_IDS_FILE: &str = "doc_ids.txt";
pub const DTM_FILE: &str = "dtm.txt";

const SIGNIFICANT_DIGITS: usize = 12;

pub fn matrix_csv<T: Real>(m: &Matrix<T>) -> String {
    let mut s = String::new();
    for row in m.iter_rows() {
        let cells: Vec<String> = row.iter().map(|&x| fmt_significant(x, SIGNIFICANT_DIGITS)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_matrix_csv<T: Real>(src: &str, cols: usize) -> Result<Matrix<T>> {
    let mut rows = Vec::new();
    for (i, line) in src.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().map(T::of))
            .collect::<std::result::Result<Vec<T>, _>>()
            .map_err(|e| Error::CorruptArtifact("csv".into(), format!("line {}: {e}", i + 1)))?;
        if row.len() != cols {
            return Err(Error::CorruptArtifact("csv".into(), format!("line {} has {} cells, expected {cols}", i + 1, row.len())));
        }
        rows.push(row);
    }
    Ok(Matrix::from_vec(rows.len(), cols, rows.concat()))
}

pub fn assignments_bytes(z: &[u32]) -> Vec<u8> {
    z.iter().flat_map(|t| t.to_le_bytes()).collect()
}

pub fn parse_assignments(bytes: &[u8]) -> Result<Vec<u32>> {
    if bytes.len() % 4 != 0 {
        return Err(Error::CorruptArtifact(ASSIGNMENTS_FILE.into(), "length not a multiple of 4".into()));
    }
    Ok(bytes.chunks_exact(4).map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

pub fn train_log_csv(chain_logs: &[Vec<f64>]) -> String {
    let mut s = String::from("chain,sweep,log_likelihood\n");
    for (c, log) in chain_logs.iter().enumerate() {
        for (i, ll) in log.iter().enumerate() {
            let _ = writeln!(s, "{c},{},{ll}", i + 1);
        }
    }
    s
}

/// Every model file as `(name, bytes)`, in a fixed order.
pub fn model_files<T: Real>(model: &TopicModel<T>, dtm: &DocTermMatrix) -> Vec<(&'static str, Vec<u8>)> {
    vec![
        (PHI_FILE, matrix_csv(&model.phi).into_bytes()),
        (THETA_FILE, matrix_csv(&model.theta).into_bytes()),
        (ASSIGNMENTS_FILE, assignments_bytes(&model.assignments)),
        (TRAIN_LOG_FILE, train_log_csv(&model.chain_logs).into_bytes()),
        (VOCAB_FILE, model.vocab.to_text().into_bytes()),
        (DOC_IDS_FILE, (model.doc_ids.join("\n") + "\n").into_bytes()),
        (DTM_FILE, dtm.to_triples().into_bytes()),
    ]
}

pub fn write_model<T: Real>(dir: &Path, model: &TopicModel<T>, dtm: &DocTermMatrix) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, bytes) in model_files(model, dtm) {
        fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn parse_train_log(src: &str) -> Result<Vec<Vec<f64>>> {
    let mut logs: Vec<Vec<f64>> = Vec::new();
    for line in src.lines().skip(1).filter(|l| !l.is_empty()) {
        let parts: Vec<&str> = line.split(',').collect();
        let bad = || Error::CorruptArtifact(TRAIN_LOG_FILE.into(), format!("bad line `{line}`"));
        let [c, _, ll] = parts[..] else { return Err(bad()) };
        let c: usize = c.parse().map_err(|_| bad())?;
        let ll: f64 = ll.parse().map_err(|_| bad())?;
        if logs.len() <= c {
            logs.resize(c + 1, Vec::new());
        }
        logs[c].push(ll);
    }
    Ok(logs)
}

/// Loads a model written by [`write_model`]. Final counts are rebuilt from
/// the assignments; averaged counts are not persisted.
pub fn read_model<T: Real>(dir: &Path, config: TrainConfig, selected_chain: usize) -> Result<(TopicModel<T>, DocTermMatrix)> {
    let read = |name: &str| fs::read_to_string(dir.join(name)).map_err(Error::from);
    let vocab = Arc::new(crate::preprocess::Vocabulary::from_text(&read(VOCAB_FILE)?)?);
    let doc_ids: Vec<String> = read(DOC_IDS_FILE)?.lines().filter(|l| !l.is_empty()).map(str::to_string).collect();
    let dtm = DocTermMatrix::from_triples(&read(DTM_FILE)?, doc_ids.clone(), vocab.clone())?;
    let phi = parse_matrix_csv::<T>(&read(PHI_FILE)?, vocab.len())?;
    let theta = parse_matrix_csv::<T>(&read(THETA_FILE)?, config.k)?;
    let assignments = parse_assignments(&fs::read(dir.join(ASSIGNMENTS_FILE))?)?;
    if assignments.len() as u64 != dtm.token_total {
        return Err(Error::CorruptArtifact(ASSIGNMENTS_FILE.into(), "token count differs from matrix".into()));
    }
    let k = config.k;
    let mut model = TopicModel::from_estimates(config, vocab, doc_ids, phi, theta)?;
    model.counts = Some(counts_from_assignments(&dtm, &assignments, k)?);
    model.empty_docs = (0..dtm.n_docs()).map(|d| dtm.rows[d].is_empty()).collect();
    model.assignments = assignments;
    model.chain_logs = parse_train_log(&read(TRAIN_LOG_FILE)?)?;
    model.selected_chain = selected_chain;
    model.dtm_hash = crate::provenance::sha256_hex(dtm.to_triples().as_bytes());
    Ok((model, dtm))
}

pub fn counts_from_assignments(dtm: &DocTermMatrix, z: &[u32], k: usize) -> Result<SufficientStats> {
    let mut n_dk = Matrix::filled(dtm.n_docs(), k, 0u32);
    let mut n_kw = Matrix::filled(k, dtm.n_terms(), 0u32);
    let mut n_k = vec![0u64; k];
    let mut i = 0;
    for (d, row) in dtm.rows.iter().enumerate() {
        for &(w, c) in row {
            for _ in 0..c {
                let t = z[i] as usize;
                if t >= k {
                    return Err(Error::CorruptArtifact(ASSIGNMENTS_FILE.into(), format!("topic {t} out of range")));
                }
                n_dk.set(d, t, n_dk.get(d, t) + 1);
                n_kw.set(t, w as usize, n_kw.get(t, w as usize) + 1);
                n_k[t] += 1;
                i += 1;
            }
        }
    }
    Ok(SufficientStats { n_dk, n_kw, n_k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Vocabulary;
    use crate::topic_engine::train_lda;

    #[test]
    fn model_round_trips_through_files() {
        let vocab = Arc::new(Vocabulary::from_terms(vec!["a".into(), "b".into(), "c".into()]).unwrap());
        let dtm = DocTermMatrix::from_dense(vec!["x".into(), "y".into(), "z".into()], vocab, &[vec![3, 1, 0], vec![0, 0, 0], vec![0, 2, 4]]).unwrap();
        let cfg = TrainConfig { k: 2, alpha: 0.5, beta: 0.1, iterations: 30, burn_in: 10, seed: 3, chains: 2 };
        let model: TopicModel = train_lda(&dtm, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_model(dir.path(), &model, &dtm).unwrap();
        let (loaded, loaded_dtm) = read_model::<f64>(dir.path(), cfg, model.selected_chain).unwrap();
        assert_eq!(loaded_dtm, dtm);
        assert_eq!(loaded.assignments, model.assignments);
        assert_eq!(loaded.counts, model.counts);
        assert_eq!(loaded.chain_logs, model.chain_logs);
        assert_eq!(loaded.empty_docs, vec![false, true, false]);
        for (a, b) in loaded.phi.as_slice().iter().zip(model.phi.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        // a second write of the loaded model reproduces the same csv bytes
        assert_eq!(matrix_csv(&loaded.theta), matrix_csv(&model.theta));
    }

    #[test]
    fn assignments_are_little_endian() {
        assert_eq!(assignments_bytes(&[1, 258]), vec![1, 0, 0, 0, 2, 1, 0, 0]);
        assert_eq!(parse_assignments(&[1, 0, 0, 0, 2, 1, 0, 0]).unwrap(), vec![1, 258]);
        assert!(parse_assignments(&[1, 2, 3]).is_err());
    }
}
