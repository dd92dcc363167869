#![allow(dead_code)]

use agrame_core::{EmbeddingMatrix, PassageRecord, PropositionMask, QueryEncoding, QueryMarker, SentenceSpan};
use proptest::prelude::*;

pub fn unit_rows(rows: usize, dim: usize) -> impl Strategy<Value = EmbeddingMatrix> {
    proptest::collection::vec(-1.0f64..1.0, rows * dim).prop_map(move |mut data| {
        for r in data.chunks_mut(dim) {
            // keep rows away from zero norm
            r[0] += if r[0] >= 0.0 { 0.5 } else { -0.5 };
        }
        EmbeddingMatrix::normalized(rows, dim, data).unwrap()
    })
}

pub fn query(max_tokens: usize, dim: usize, marker: QueryMarker) -> impl Strategy<Value = QueryEncoding> {
    (1..=max_tokens).prop_flat_map(move |n| unit_rows(n, dim).prop_map(move |m| QueryEncoding::new("q", marker, m)))
}

/// Contiguous covering spans from a set of cut points.
pub fn spans_from_cuts(n: usize, cuts: &[bool]) -> Vec<SentenceSpan> {
    let mut spans = Vec::new();
    let mut start = 0;
    for i in 1..n {
        if cuts[i - 1] {
            spans.push(SentenceSpan::new(start, i));
            start = i;
        }
    }
    spans.push(SentenceSpan::new(start, n));
    spans
}

/// Random passage with a random sentence partition and one proposition per
/// sentence made of a random non-empty subset of that sentence's tokens.
pub fn passage(id: &'static str, max_tokens: usize, dim: usize) -> impl Strategy<Value = PassageRecord> {
    (1..=max_tokens).prop_flat_map(move |n| {
        (
            unit_rows(n, dim),
            proptest::collection::vec(any::<bool>(), n.saturating_sub(1)),
            proptest::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(m, cuts, pick)| {
                let spans = spans_from_cuts(n, &cuts);
                let props = spans
                    .iter()
                    .enumerate()
                    .map(|(s, sp)| {
                        let mut toks: Vec<usize> = sp.range().filter(|&t| pick[t]).collect();
                        if toks.is_empty() {
                            toks.push(sp.start);
                        }
                        PropositionMask::new(s, toks)
                    })
                    .collect();
                PassageRecord::new(id, m, spans, props).unwrap()
            })
    })
}

/// Independent nested-loop MaxSim over explicit row lists.
pub fn brute_maxsim(q: &[Vec<f64>], u: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for a in q {
        let mut best = f64::NEG_INFINITY;
        for b in u {
            let mut s = 0.0;
            for k in 0..a.len() {
                s += a[k] * b[k];
            }
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    total
}

pub fn rows_of(m: &EmbeddingMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn pick(m: &EmbeddingMatrix, idx: impl IntoIterator<Item = usize>) -> Vec<Vec<f64>> {
    idx.into_iter().map(|i| m.row(i).to_vec()).collect()
}
