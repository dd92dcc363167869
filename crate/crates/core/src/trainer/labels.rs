//! Sentence labels from answer containment and the desk-scale teacher
//! scores derived from them.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::text::contains_normalized;

/// Teacher score for an answer-bearing sentence or passage.
pub const POSITIVE_SCORE: f64 = 5.0;
/// Teacher score for everything else.
pub const NEGATIVE_SCORE: f64 = 0.0;
/// Half-width of the uniform tie-breaking noise.
pub const TEACHER_NOISE: f64 = 0.1;

/// 1 for every sentence that contains the answer (case-insensitive,
/// whitespace-normalized substring), 0 otherwise.
pub fn synth_sentence_labels<S: AsRef<str>>(sentences: &[S], answer: &str) -> Result<Vec<u8>> {
    if answer.trim().is_empty() {
        return Err(Error::InvalidArgument("empty answer".into()));
    }
    Ok(sentences
        .iter()
        .map(|s| u8::from(contains_normalized(s.as_ref(), answer)))
        .collect())
}

/// Maps binary labels to teacher scores with uniform noise in
/// `[-TEACHER_NOISE, TEACHER_NOISE)`.
pub fn teacher_scores_from_labels<R: Rng + ?Sized>(labels: &[u8], rng: &mut R) -> Vec<f64> {
    labels
        .iter()
        .map(|&l| {
            let base = if l > 0 { POSITIVE_SCORE } else { NEGATIVE_SCORE };
            base + rng.random_range(-TEACHER_NOISE..TEACHER_NOISE)
        })
        .collect()
}
