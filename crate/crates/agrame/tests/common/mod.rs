#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use agrame::storage::f32_rounded;
use agrame_core::{EmbeddingMatrix, PassageRecord, PropositionMask, QueryEncoding, QueryMarker, SentenceSpan};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

/// Unit rows already rounded to f32 so a write/read cycle is exact.
pub fn matrix<R: Rng>(rng: &mut R, rows: usize, dim: usize) -> EmbeddingMatrix {
    loop {
        let data: Vec<f64> = (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(m) = EmbeddingMatrix::normalized(rows, dim, data) {
            return f32_rounded(&m).unwrap();
        }
    }
}

pub fn passage<R: Rng>(rng: &mut R, id: String, dim: usize) -> PassageRecord {
    let n = rng.random_range(1..=12);
    let m = matrix(rng, n, dim);
    let mut cuts: Vec<usize> = (1..n).filter(|_| rng.random_bool(0.3)).collect();
    cuts.insert(0, 0);
    cuts.push(n);
    let spans: Vec<SentenceSpan> = cuts.windows(2).map(|w| SentenceSpan::new(w[0], w[1])).collect();
    let mut props = Vec::new();
    for (j, s) in spans.iter().enumerate() {
        for _ in 0..rng.random_range(0..3) {
            let mut t: Vec<usize> = s.range().collect();
            t.shuffle(rng);
            t.truncate(rng.random_range(1..=s.len()));
            t.sort_unstable();
            props.push(PropositionMask::new(j, t));
        }
    }
    let mut p = PassageRecord::new(id, m, spans, props).unwrap();
    if rng.random_bool(0.5) {
        let t = format!("text \"{}\" é\t{}", p.id, rng.random::<u32>());
        p = p.with_text(t);
        if rng.random_bool(0.5) {
            let texts = (0..p.sentences.len()).map(|j| format!("s{j}")).collect();
            p = p.with_sentence_texts(texts).unwrap();
        }
    }
    p
}

pub fn passages<R: Rng>(rng: &mut R) -> Vec<PassageRecord> {
    let dim = rng.random_range(1..=8);
    let n = rng.random_range(0..6);
    (0..n)
        .map(|i| {
            let id = format!("p{i}-{}", rng.random::<u16>());
            passage(rng, id, dim)
        })
        .collect()
}

pub fn queries<R: Rng>(rng: &mut R) -> Vec<QueryEncoding> {
    let dim = rng.random_range(1..=8);
    let n = rng.random_range(0..4);
    let mut out = Vec::new();
    for i in 0..n {
        for m in [QueryMarker::Passage, QueryMarker::Sentence] {
            if rng.random_bool(0.7) {
                let rows = rng.random_range(1..=6);
                out.push(QueryEncoding::new(format!("q{i}"), m, matrix(rng, rows, dim)));
            }
        }
    }
    out
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_agrame"))
}

pub fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .env_remove("AGRAME_THREADS")
        .output()
        .expect("binary runs")
}

pub fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}
