//! Distillation losses over listwise score distributions.
//!
//! Passage level: forward KL from the teacher's softmax over the passage set
//! to the student's. Sentence level: the same KL over each passage's
//! sentences, aggregated with weights equal to the softmax of the teacher's
//! passage scores. The training objective is the unweighted sum of the two.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scorer::maxsim;
use crate::types::{PassageRecord, QueryEncoding, QueryMarker};

/// Tolerance on the sum of a probability vector accepted by [`kl_div`].
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-6;

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(alloc::format!(
            "temperature must be > 0, got {t}"
        )))
    }
}

/// `log(sum(exp(x)))` with max subtraction.
pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(xs.map(|x| libm::exp(x - max)).sum::<f64>())
}

/// Log-probabilities of `softmax(scores / temperature)`.
pub fn log_softmax(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    check_temperature(temperature)?;
    let lse = log_sum_exp(scores.iter().map(|s| s / temperature));
    Ok(scores.iter().map(|s| s / temperature - lse).collect())
}

/// `softmax(scores / temperature)`, computed with max subtraction.
pub fn softmax_dist(scores: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    check_temperature(temperature)?;
    let max = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s / temperature));
    let exps: Vec<f64> = scores
        .iter()
        .map(|s| libm::exp(s / temperature - max))
        .collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Forward KL `sum_i t_i ln(t_i / s_i)`, teacher first.
///
/// Zero teacher entries contribute nothing; a zero student entry under
/// nonzero teacher mass is a support mismatch.
pub fn kl_div(teacher: &[f64], student: &[f64]) -> Result<f64> {
    if teacher.len() != student.len() {
        return Err(Error::LengthMismatch {
            what: "teacher vs student distribution",
            left: teacher.len(),
            right: student.len(),
        });
    }
    if teacher.is_empty() {
        return Err(Error::Empty("distribution"));
    }
    for dist in [teacher, student] {
        let sum: f64 = dist.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE || dist.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::NotADistribution { sum });
        }
    }
    let mut kl = 0.0;
    for (&t, &s) in teacher.iter().zip(student) {
        if t == 0.0 {
            continue;
        }
        if s == 0.0 {
            return Err(Error::SupportMismatch);
        }
        kl += t * libm::log(t / s);
    }
    // rounding can leave a tiny negative value for identical inputs
    Ok(kl.max(0.0))
}

/// KL between the softmaxes of two score lists, evaluated in log space so
/// saturated softmaxes never produce a spurious support mismatch.
pub fn kl_from_scores(teacher_scores: &[f64], student_scores: &[f64], temperature: f64) -> Result<f64> {
    if teacher_scores.len() != student_scores.len() {
        return Err(Error::LengthMismatch {
            what: "teacher vs student scores",
            left: teacher_scores.len(),
            right: student_scores.len(),
        });
    }
    let lt = log_softmax(teacher_scores, temperature)?;
    let ls = log_softmax(student_scores, temperature)?;
    let kl: f64 = lt
        .iter()
        .zip(&ls)
        .map(|(&a, &b)| {
            let t = libm::exp(a);
            if t == 0.0 {
                0.0
            } else {
                t * (a - b)
            }
        })
        .sum();
    Ok(kl.max(0.0))
}

/// Passage-level loss over the (k+1)-way passage set.
pub fn passage_loss(student_scores: &[f64], teacher_scores: &[f64], temperature: f64) -> Result<f64> {
    kl_from_scores(teacher_scores, student_scores, temperature)
}

/// Within-passage sentence loss. A single-sentence passage has a degenerate
/// distribution and contributes exactly 0.
pub fn sentence_loss_per_passage(
    student_sentence_scores: &[f64],
    teacher_sentence_scores: &[f64],
    temperature: f64,
) -> Result<f64> {
    if student_sentence_scores.len() != teacher_sentence_scores.len() {
        return Err(Error::LengthMismatch {
            what: "sentence scores",
            left: student_sentence_scores.len(),
            right: teacher_sentence_scores.len(),
        });
    }
    match student_sentence_scores.len() {
        0 => Err(Error::Empty("sentence scores")),
        1 => {
            check_temperature(temperature)?;
            Ok(0.0)
        }
        _ => kl_from_scores(teacher_sentence_scores, student_sentence_scores, temperature),
    }
}

/// Convex combination of per-passage sentence losses, weighted by the
/// softmax of the teacher passage scores.
pub fn aggregate_sentence_loss(
    per_passage_l_s: &[f64],
    teacher_passage_scores: &[f64],
    temperature: f64,
) -> Result<f64> {
    if per_passage_l_s.len() != teacher_passage_scores.len() {
        return Err(Error::LengthMismatch {
            what: "per-passage losses vs teacher passage scores",
            left: per_passage_l_s.len(),
            right: teacher_passage_scores.len(),
        });
    }
    let w = softmax_dist(teacher_passage_scores, temperature)?;
    Ok(w.iter().zip(per_passage_l_s).map(|(w, l)| w * l).sum())
}

/// Query with `k + 1` encoded candidate passages.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageSet {
    pub query_id: alloc::string::String,
    pub passages: Vec<PassageRecord>,
}

impl PassageSet {
    pub fn new(query_id: impl Into<alloc::string::String>, passages: Vec<PassageRecord>) -> Result<Self> {
        if passages.len() < 2 {
            return Err(Error::InvalidArgument(alloc::format!(
                "a passage set needs at least 2 passages, got {}",
                passages.len()
            )));
        }
        Ok(Self {
            query_id: query_id.into(),
            passages,
        })
    }

    pub fn sentence_counts(&self) -> Vec<usize> {
        self.passages.iter().map(|p| p.sentences.len()).collect()
    }
}

/// Cross-encoder supervision for one passage set.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherScores {
    pub passage_scores: Vec<f64>,
    /// One list per passage, one score per sentence.
    pub sentence_scores: Vec<Vec<f64>>,
}

impl TeacherScores {
    /// Checks lengths against the per-passage sentence counts.
    pub fn check_shape(&self, sentence_counts: &[usize]) -> Result<()> {
        if self.passage_scores.len() != sentence_counts.len() {
            return Err(Error::LengthMismatch {
                what: "teacher passage scores vs passages",
                left: self.passage_scores.len(),
                right: sentence_counts.len(),
            });
        }
        if self.sentence_scores.len() != sentence_counts.len() {
            return Err(Error::LengthMismatch {
                what: "teacher sentence lists vs passages",
                left: self.sentence_scores.len(),
                right: sentence_counts.len(),
            });
        }
        for (s, &n) in self.sentence_scores.iter().zip(sentence_counts) {
            if s.len() != n {
                return Err(Error::LengthMismatch {
                    what: "teacher sentence scores vs sentences",
                    left: s.len(),
                    right: n,
                });
            }
        }
        let all_finite = self.passage_scores.iter().all(|v| v.is_finite())
            && self.sentence_scores.iter().flatten().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidArgument("non-finite teacher score".into()));
        }
        Ok(())
    }
}

/// Student scores at both granularities for one passage set.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentScores {
    pub passage_scores: Vec<f64>,
    pub sentence_scores: Vec<Vec<f64>>,
}

/// Anything that can score a passage set at passage and sentence level.
pub trait StudentScorer {
    fn score(&self, set: &PassageSet) -> Result<StudentScores>;
}

/// Student backed by fixed query encodings: passage scores use the default
/// marker encoding, sentence scores the sentence-marker encoding.
#[derive(Debug, Clone, Copy)]
pub struct EncodedStudent<'a> {
    pub query_default: &'a QueryEncoding,
    pub query_sentence: &'a QueryEncoding,
}

impl StudentScorer for EncodedStudent<'_> {
    fn score(&self, set: &PassageSet) -> Result<StudentScores> {
        self.query_default.expect_marker(QueryMarker::Passage)?;
        self.query_sentence.expect_marker(QueryMarker::Sentence)?;
        let mut passage_scores = Vec::with_capacity(set.passages.len());
        let mut sentence_scores = Vec::with_capacity(set.passages.len());
        for p in &set.passages {
            passage_scores.push(maxsim(self.query_default, p.embeddings.all_rows())?);
            let mut per = Vec::with_capacity(p.sentences.len());
            for j in 0..p.sentences.len() {
                per.push(maxsim(self.query_sentence, p.sentence_rows(j)?)?);
            }
            sentence_scores.push(per);
        }
        Ok(StudentScores {
            passage_scores,
            sentence_scores,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub l_psg: f64,
    pub per_passage_l_s: Vec<f64>,
    pub l_sent: f64,
    pub total: f64,
}

/// Full loss report from precomputed student scores.
pub fn loss_report(
    student: &StudentScores,
    teacher: &TeacherScores,
    temperature: f64,
) -> Result<LossReport> {
    let counts: Vec<usize> = student.sentence_scores.iter().map(Vec::len).collect();
    teacher.check_shape(&counts)?;
    if student.passage_scores.len() != counts.len() {
        return Err(Error::LengthMismatch {
            what: "student passage scores vs sentence lists",
            left: student.passage_scores.len(),
            right: counts.len(),
        });
    }
    let l_psg = passage_loss(&student.passage_scores, &teacher.passage_scores, temperature)?;
    let per_passage_l_s = student
        .sentence_scores
        .iter()
        .zip(&teacher.sentence_scores)
        .map(|(s, t)| sentence_loss_per_passage(s, t, temperature))
        .collect::<Result<Vec<_>>>()?;
    let l_sent = aggregate_sentence_loss(&per_passage_l_s, &teacher.passage_scores, temperature)?;
    Ok(LossReport {
        l_psg,
        per_passage_l_s,
        l_sent,
        total: l_psg + l_sent,
    })
}

pub fn total_loss(
    set: &PassageSet,
    teacher: &TeacherScores,
    student: &impl StudentScorer,
    temperature: f64,
) -> Result<LossReport> {
    teacher.check_shape(&set.sentence_counts())?;
    let scores = student.score(set)?;
    loss_report(&scores, teacher, temperature)
}

/// Gradients of the losses with respect to the student scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGradients {
    pub passage: Vec<f64>,
    pub sentence: Vec<Vec<f64>>,
}

/// d(loss)/d(student score). With `include_sentence` false only the passage
/// loss is differentiated.
pub fn score_gradients(
    student: &StudentScores,
    teacher: &TeacherScores,
    temperature: f64,
    include_sentence: bool,
) -> Result<ScoreGradients> {
    let counts: Vec<usize> = student.sentence_scores.iter().map(Vec::len).collect();
    teacher.check_shape(&counts)?;
    // d KL(t || softmax(s/T)) / d s_i = (softmax(s/T)_i - t_i) / T
    let kl_grad = |s: &[f64], t: &[f64]| -> Result<Vec<f64>> {
        let ps = softmax_dist(s, temperature)?;
        let pt = softmax_dist(t, temperature)?;
        Ok(ps.iter().zip(&pt).map(|(a, b)| (a - b) / temperature).collect())
    };
    let passage = kl_grad(&student.passage_scores, &teacher.passage_scores)?;
    let weights = softmax_dist(&teacher.passage_scores, temperature)?;
    let mut sentence = Vec::with_capacity(counts.len());
    for (i, (s, t)) in student
        .sentence_scores
        .iter()
        .zip(&teacher.sentence_scores)
        .enumerate()
    {
        if !include_sentence || s.len() < 2 {
            sentence.push(alloc::vec![0.0; s.len()]);
        } else {
            let g = kl_grad(s, t)?;
            sentence.push(g.into_iter().map(|v| v * weights[i]).collect());
        }
    }
    Ok(ScoreGradients { passage, sentence })
}
