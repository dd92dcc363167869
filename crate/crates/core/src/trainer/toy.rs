//! Training examples over token ids and the end-to-end loss and gradient of
//! the toy encoder on one example.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scorer::maxsim_rows;
use crate::trainer::encoder::{EncoderMarker, Forward, ToyEncoder};
use crate::trainer::loss::{loss_report, score_gradients, LossReport, StudentScores, TeacherScores};
use crate::types::{EmbeddingMatrix, PassageRecord, SentenceSpan};

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPassage {
    pub id: String,
    pub tokens: Vec<u32>,
    pub sentences: Vec<SentenceSpan>,
    /// Surface text per sentence, used for answer-containment labels.
    pub sentence_texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyExample {
    pub query_id: String,
    pub query_tokens: Vec<u32>,
    pub answer: String,
    pub passages: Vec<ToyPassage>,
    pub teacher: TeacherScores,
}

impl ToyExample {
    pub fn validate(&self, vocab: usize) -> Result<()> {
        let check_ids = |ids: &[u32]| -> Result<()> {
            match ids.iter().find(|&&t| t as usize >= vocab) {
                Some(&id) => Err(Error::TokenOutOfRange { id, vocab }),
                None => Ok(()),
            }
        };
        if self.query_tokens.is_empty() {
            return Err(Error::Empty("query tokens"));
        }
        check_ids(&self.query_tokens)?;
        if self.passages.len() < 2 {
            return Err(Error::InvalidArgument(alloc::format!(
                "example {} has {} passages; need at least 2",
                self.query_id,
                self.passages.len()
            )));
        }
        for p in &self.passages {
            check_ids(&p.tokens)?;
            if !p.sentence_texts.is_empty() && p.sentence_texts.len() != p.sentences.len() {
                return Err(Error::LengthMismatch {
                    what: "sentence texts vs spans",
                    left: p.sentence_texts.len(),
                    right: p.sentences.len(),
                });
            }
            let n = p.tokens.len();
            let contiguous = !p.sentences.is_empty()
                && p.sentences[0].start == 0
                && p.sentences.last().map(|s| s.end) == Some(n)
                && p.sentences.iter().all(|s| s.start < s.end)
                && p.sentences.windows(2).all(|w| w[0].end == w[1].start);
            if !contiguous {
                return Err(Error::InvalidRecord {
                    id: p.id.clone(),
                    detail: "sentence spans must be contiguous and cover every token".into(),
                });
            }
        }
        let counts: Vec<usize> = self.passages.iter().map(|p| p.sentences.len()).collect();
        self.teacher.check_shape(&counts)
    }

    /// Index of the teacher's top passage and its top sentence (lowest index
    /// on ties).
    pub fn teacher_target(&self) -> (usize, usize) {
        let p = argmax(&self.teacher.passage_scores);
        (p, argmax(&self.teacher.sentence_scores[p]))
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Forward activations for one example.
pub(crate) struct EncodedToy {
    pub query_default: Forward,
    pub query_sentence: Forward,
    pub passages: Vec<Forward>,
    pub qd: EmbeddingMatrix,
    pub qs: EmbeddingMatrix,
    pub pm: Vec<EmbeddingMatrix>,
}

pub(crate) fn encode(
    enc: &ToyEncoder,
    ex: &ToyExample,
    sentence_marker: EncoderMarker,
) -> Result<EncodedToy> {
    let query_default = enc.forward_cached(&ex.query_tokens, EncoderMarker::Query)?;
    let query_sentence = enc.forward_cached(&ex.query_tokens, sentence_marker)?;
    let passages = ex
        .passages
        .iter()
        .map(|p| enc.forward_cached(&p.tokens, EncoderMarker::Passage))
        .collect::<Result<Vec<_>>>()?;
    let dim = enc.dim();
    Ok(EncodedToy {
        qd: query_default.matrix(dim),
        qs: query_sentence.matrix(dim),
        pm: passages.iter().map(|f| f.matrix(dim)).collect(),
        query_default,
        query_sentence,
        passages,
    })
}

/// Encodes the example's passages as records (for the scorer and storage).
pub fn encode_passages(enc: &ToyEncoder, ex: &ToyExample) -> Result<Vec<PassageRecord>> {
    ex.passages
        .iter()
        .map(|p| {
            let m = crate::trainer::encoder::toy_forward(enc, &p.tokens, EncoderMarker::Passage)?;
            PassageRecord::new(p.id.clone(), m, p.sentences.clone(), Vec::new())
        })
        .collect()
}

struct Argmaxes {
    passage: Vec<Vec<usize>>,
    sentence: Vec<Vec<Vec<usize>>>,
}

fn student_scores(e: &EncodedToy, ex: &ToyExample) -> Result<(StudentScores, Argmaxes)> {
    let mut passage_scores = Vec::with_capacity(ex.passages.len());
    let mut sentence_scores = Vec::with_capacity(ex.passages.len());
    let mut arg = Argmaxes {
        passage: Vec::new(),
        sentence: Vec::new(),
    };
    for (p, m) in ex.passages.iter().zip(&e.pm) {
        let (s, b) = maxsim_rows(e.qd.all_rows(), m.all_rows())?;
        passage_scores.push(s);
        arg.passage.push(b.per_query_token_argmax);
        let mut per = Vec::with_capacity(p.sentences.len());
        let mut per_arg = Vec::with_capacity(p.sentences.len());
        for span in &p.sentences {
            let (s, b) = maxsim_rows(e.qs.all_rows(), m.span_rows(span)?)?;
            per.push(s);
            per_arg.push(b.per_query_token_argmax);
        }
        sentence_scores.push(per);
        arg.sentence.push(per_arg);
    }
    Ok((
        StudentScores {
            passage_scores,
            sentence_scores,
        },
        arg,
    ))
}

/// Loss report of the toy student on one example. Sentence scores use
/// `sentence_marker` on the query side.
pub fn example_loss(
    enc: &ToyEncoder,
    ex: &ToyExample,
    sentence_marker: EncoderMarker,
    temperature: f64,
) -> Result<LossReport> {
    let e = encode(enc, ex, sentence_marker)?;
    let (scores, _) = student_scores(&e, ex)?;
    loss_report(&scores, &ex.teacher, temperature)
}

/// Loss report plus the parameter gradient of either the total loss
/// (`include_sentence`) or the passage loss alone.
///
/// MaxSim is differentiated through its argmax: each query token's gradient
/// flows only to the lowest-index maximizing unit token.
pub fn example_loss_and_grad(
    enc: &ToyEncoder,
    ex: &ToyExample,
    sentence_marker: EncoderMarker,
    temperature: f64,
    include_sentence: bool,
) -> Result<(LossReport, Vec<f64>)> {
    let e = encode(enc, ex, sentence_marker)?;
    let (scores, arg) = student_scores(&e, ex)?;
    let report = loss_report(&scores, &ex.teacher, temperature)?;
    let g = score_gradients(&scores, &ex.teacher, temperature, include_sentence)?;

    let dim = enc.dim();
    let nq = ex.query_tokens.len();
    let mut d_qd = vec![0.0; nq * dim];
    let mut d_qs = vec![0.0; nq * dim];
    let mut d_p: Vec<Vec<f64>> = ex.passages.iter().map(|p| vec![0.0; p.tokens.len() * dim]).collect();

    let spread = |q: &EmbeddingMatrix, dq: &mut [f64], p: &EmbeddingMatrix, dp: &mut [f64], args: &[usize], w: f64| {
        if w == 0.0 {
            return;
        }
        for (a, &j) in args.iter().enumerate() {
            let (qa, pj) = (q.row(a), p.row(j));
            for k in 0..dim {
                dq[a * dim + k] += w * pj[k];
                dp[j * dim + k] += w * qa[k];
            }
        }
    };

    for i in 0..ex.passages.len() {
        spread(&e.qd, &mut d_qd, &e.pm[i], &mut d_p[i], &arg.passage[i], g.passage[i]);
        for s in 0..ex.passages[i].sentences.len() {
            spread(&e.qs, &mut d_qs, &e.pm[i], &mut d_p[i], &arg.sentence[i][s], g.sentence[i][s]);
        }
    }

    let mut grad = vec![0.0; enc.param_count()];
    enc.backward(&e.query_default, &d_qd, &mut grad);
    enc.backward(&e.query_sentence, &d_qs, &mut grad);
    for (f, dp) in e.passages.iter().zip(&d_p) {
        enc.backward(f, dp, &mut grad);
    }
    Ok((report, grad))
}

/// Smallest gap between a query token's best and second-best dot product
/// over every MaxSim evaluated for the example. Small gaps mean the loss is
/// near a kink of the max.
pub fn min_argmax_gap(enc: &ToyEncoder, ex: &ToyExample, sentence_marker: EncoderMarker) -> Result<f64> {
    let e = encode(enc, ex, sentence_marker)?;
    let mut gap = f64::INFINITY;
    let mut visit = |q: &EmbeddingMatrix, rows: crate::types::Rows<'_>| {
        for qa in q.iter_rows() {
            let (mut best, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for (_, u) in rows.iter() {
                let s = crate::types::dot(qa, u);
                if s > best {
                    second = best;
                    best = s;
                } else if s > second {
                    second = s;
                }
            }
            if second.is_finite() {
                gap = gap.min(best - second);
            }
        }
    };
    for (p, m) in ex.passages.iter().zip(&e.pm) {
        visit(&e.qd, m.all_rows());
        for span in &p.sentences {
            visit(&e.qs, m.span_rows(span)?);
        }
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture_b;

    #[test]
    fn fixture_b_validates_and_has_a_target() {
        let (enc, ex) = fixture_b();
        ex.validate(enc.vocab()).unwrap();
        let (p, s) = ex.teacher_target();
        assert!(p < 2 && s < 2);
    }

    #[test]
    fn passage_only_gradient_ignores_sentence_terms() {
        let (enc, mut ex) = fixture_b();
        let (_, g1) = example_loss_and_grad(&enc, &ex, EncoderMarker::SentenceQuery, 1.0, false).unwrap();
        for s in ex.teacher.sentence_scores.iter_mut().flatten() {
            *s *= -3.0;
        }
        let (_, g2) = example_loss_and_grad(&enc, &ex, EncoderMarker::SentenceQuery, 1.0, false).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn validation_catches_bad_examples() {
        let (enc, ex) = fixture_b();
        let mut bad = ex.clone();
        bad.query_tokens.push(enc.vocab() as u32);
        assert!(bad.validate(enc.vocab()).is_err());
        let mut bad = ex.clone();
        bad.passages[0].sentences[1].start += 1;
        assert!(bad.validate(enc.vocab()).is_err());
        let mut bad = ex;
        bad.teacher.passage_scores.pop();
        assert!(bad.validate(enc.vocab()).is_err());
    }
}
