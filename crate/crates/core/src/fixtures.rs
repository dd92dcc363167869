//! Small seed-fixed inputs shared by unit tests, integration tests and the
//! acceptance suite.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::trainer::encoder::{toy_forward, EncoderMarker, ToyEncoder};
use crate::trainer::loss::{PassageSet, TeacherScores};
use crate::trainer::synth::tokens_text;
use crate::trainer::toy::{ToyExample, ToyPassage};
use crate::types::{EmbeddingMatrix, PassageRecord, QueryEncoding, QueryMarker, SentenceSpan};

/// Two-token query `[1,0], [0,1]`.
pub fn fixture_a_query(marker: QueryMarker) -> QueryEncoding {
    let m = EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).expect("unit rows");
    QueryEncoding::new("q", marker, m)
}

/// Passage "A": rows `[1,0], [0.6,0.8], [0,1], [0.8,0.6]`, sentences `[0,2)`
/// and `[2,4)`.
pub fn fixture_a_passage() -> PassageRecord {
    let m = EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.6, 0.8], [0.0, 1.0], [0.8, 0.6]]).expect("unit rows");
    PassageRecord::new(
        "A",
        m,
        vec![SentenceSpan::new(0, 2), SentenceSpan::new(2, 4)],
        Vec::new(),
    )
    .expect("valid fixture")
}

pub const FIXTURE_B_SEED: u64 = 2024;
pub const FIXTURE_B_VOCAB: usize = 12;

fn toy_passage(id: &str, sentences: &[&[u32]]) -> ToyPassage {
    let mut tokens = Vec::new();
    let mut spans = Vec::new();
    let mut texts = Vec::new();
    for s in sentences {
        spans.push(SentenceSpan::new(tokens.len(), tokens.len() + s.len()));
        texts.push(tokens_text(s));
        tokens.extend_from_slice(s);
    }
    ToyPassage {
        id: id.to_string(),
        tokens,
        sentences: spans,
        sentence_texts: texts,
    }
}

/// A seed-fixed toy encoder and one example with two passages of two
/// sentences each.
pub fn fixture_b() -> (ToyEncoder, ToyExample) {
    let mut rng = ChaCha8Rng::seed_from_u64(FIXTURE_B_SEED);
    let enc = ToyEncoder::random(FIXTURE_B_VOCAB, 6, 4, &mut rng).expect("valid shape");
    let ex = ToyExample {
        query_id: "qb".to_string(),
        query_tokens: vec![0, 1, 2],
        answer: tokens_text(&[5]),
        passages: vec![
            toy_passage("B0", &[&[3, 4, 0], &[5, 1, 6]]),
            toy_passage("B1", &[&[7, 8], &[9, 2, 10, 11]]),
        ],
        teacher: TeacherScores {
            passage_scores: vec![5.03, -0.02],
            sentence_scores: vec![vec![0.04, 4.97], vec![0.01, -0.06]],
        },
    };
    (enc, ex)
}

/// FIXTURE-B as plain embeddings: the passage set, the query encoded with
/// the default and the sentence marker, and the teacher scores.
pub struct FixtureBEmbedded {
    pub set: PassageSet,
    pub query_default: QueryEncoding,
    pub query_sentence: QueryEncoding,
    pub teacher: TeacherScores,
}

pub fn fixture_b_embedded() -> FixtureBEmbedded {
    let (enc, ex) = fixture_b();
    let passages = ex
        .passages
        .iter()
        .map(|p| {
            let m = toy_forward(&enc, &p.tokens, EncoderMarker::Passage).expect("encodable");
            PassageRecord::new(p.id.clone(), m, p.sentences.clone(), Vec::new()).expect("valid")
        })
        .collect();
    let q = |marker: EncoderMarker, qm: QueryMarker| {
        let m = toy_forward(&enc, &ex.query_tokens, marker).expect("encodable");
        QueryEncoding::new(String::from("qb"), qm, m)
    };
    FixtureBEmbedded {
        set: PassageSet::new("qb", passages).expect("two passages"),
        query_default: q(EncoderMarker::Query, QueryMarker::Passage),
        query_sentence: q(EncoderMarker::SentenceQuery, QueryMarker::Sentence),
        teacher: ex.teacher,
    }
}
