//! Exact MaxSim scoring at passage, sentence and proposition granularity.
//!
//! A unit's score is `sum_i max_j q_i . u_j` over the query token rows `q_i`
//! and the unit's token rows `u_j`. Sentence and proposition units reuse the
//! passage encoding and only restrict which rows take part in the max.
//!
//! Ties in the max go to the lowest absolute token index. Rankings are sorted
//! by descending score with ties broken by passage id, then unit.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::types::{dot, PassageRecord, QueryEncoding, QueryMarker, RankingConfig, Rows};

/// Granularity of a scored unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Unit {
    Passage,
    Sentence(usize),
    Proposition(usize),
}

impl Unit {
    pub fn kind(&self) -> &'static str {
        match self {
            Unit::Passage => "passage",
            Unit::Sentence(_) => "sentence",
            Unit::Proposition(_) => "proposition",
        }
    }

    pub fn index(&self) -> Option<usize> {
        match *self {
            Unit::Passage => None,
            Unit::Sentence(i) | Unit::Proposition(i) => Some(i),
        }
    }
}

/// Per-query-token maxima and the passage tokens they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBreakdown {
    pub per_query_token_max: Vec<f64>,
    /// Absolute token indices within the passage.
    pub per_query_token_argmax: Vec<usize>,
}

impl ScoreBreakdown {
    pub fn total(&self) -> f64 {
        self.per_query_token_max.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredUnit {
    pub passage_id: String,
    pub unit: Unit,
    pub score: f64,
    /// Breakdown of the raw MaxSim over the unit's own rows. For combined
    /// sentence scores this excludes the passage term.
    pub breakdown: Option<ScoreBreakdown>,
}

/// MaxSim of `query` rows against `unit` rows with the full breakdown.
pub fn maxsim_rows(query: Rows<'_>, unit: Rows<'_>) -> Result<(f64, ScoreBreakdown)> {
    if query.dim() != unit.dim() {
        return Err(Error::DimMismatch {
            expected: query.dim(),
            actual: unit.dim(),
        });
    }
    if unit.is_empty() {
        return Err(Error::Empty("unit rows"));
    }
    let mut maxima = Vec::with_capacity(query.len());
    let mut argmax = Vec::with_capacity(query.len());
    let mut total = 0.0;
    for (_, q) in query.iter() {
        let mut best = f64::NEG_INFINITY;
        let mut best_idx = 0;
        for (j, u) in unit.iter() {
            let s = dot(q, u);
            // strict comparison keeps the first (lowest-index) maximum
            if s > best {
                best = s;
                best_idx = j;
            }
        }
        total += best;
        maxima.push(best);
        argmax.push(best_idx);
    }
    Ok((
        total,
        ScoreBreakdown {
            per_query_token_max: maxima,
            per_query_token_argmax: argmax,
        },
    ))
}

/// Raw MaxSim score only; no marker check.
pub fn maxsim(query: &QueryEncoding, unit: Rows<'_>) -> Result<f64> {
    maxsim_rows(query.embeddings.all_rows(), unit).map(|(s, _)| s)
}

pub fn maxsim_with_breakdown(
    query: &QueryEncoding,
    unit: Rows<'_>,
) -> Result<(f64, ScoreBreakdown)> {
    maxsim_rows(query.embeddings.all_rows(), unit)
}

/// In-passage sentence score using a sentence-marker query encoding.
pub fn score_sentence_in_passage(
    query_prime: &QueryEncoding,
    passage: &PassageRecord,
    sentence_idx: usize,
) -> Result<f64> {
    query_prime.expect_marker(QueryMarker::Sentence)?;
    maxsim(query_prime, passage.sentence_rows(sentence_idx)?)
}

/// Passage score using the default-marker query encoding.
pub fn score_passage(query_default: &QueryEncoding, passage: &PassageRecord) -> Result<f64> {
    query_default.expect_marker(QueryMarker::Passage)?;
    maxsim(query_default, passage.embeddings.all_rows())
}

/// In-passage sentence score plus `alpha` times the passage score.
pub fn combined_sentence_score(
    query_prime: &QueryEncoding,
    query_default: &QueryEncoding,
    passage: &PassageRecord,
    sentence_idx: usize,
    cfg: &RankingConfig,
) -> Result<f64> {
    let sentence = score_sentence_in_passage(query_prime, passage, sentence_idx)?;
    let passage_score = score_passage(query_default, passage)?;
    Ok(sentence + cfg.alpha * passage_score)
}

/// Proposition score over the masked rows, using the default marker.
pub fn score_proposition(
    query: &QueryEncoding,
    passage: &PassageRecord,
    prop_idx: usize,
) -> Result<f64> {
    query.expect_marker(QueryMarker::Passage)?;
    maxsim(query, passage.proposition_rows(prop_idx)?)
}

/// Passage score under sentence-level encoding: the best of the passage's
/// separately encoded sentences.
pub fn passage_score_from_sentence_encoding(
    query: &QueryEncoding,
    sentence_records: &[PassageRecord],
) -> Result<f64> {
    if sentence_records.is_empty() {
        return Err(Error::Empty("sentence group"));
    }
    let mut best = f64::NEG_INFINITY;
    for rec in sentence_records {
        best = best.max(maxsim(query, rec.embeddings.all_rows())?);
    }
    Ok(best)
}

/// Deterministic ranking order: score descending, then passage id, then unit.
pub fn ranking_order(a: &ScoredUnit, b: &ScoredUnit) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.passage_id.cmp(&b.passage_id))
        .then_with(|| a.unit.cmp(&b.unit))
}

pub fn sort_ranking(units: &mut [ScoredUnit]) {
    units.sort_by(ranking_order);
}

/// Reranks candidate sets at a chosen granularity.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ranker {
    pub cfg: RankingConfig,
    pub breakdown: bool,
}

impl Ranker {
    pub fn new(cfg: RankingConfig) -> Self {
        Self {
            cfg,
            breakdown: false,
        }
    }

    pub fn with_breakdown(mut self, on: bool) -> Self {
        self.breakdown = on;
        self
    }

    fn keep(&self, b: ScoreBreakdown) -> Option<ScoreBreakdown> {
        self.breakdown.then_some(b)
    }

    pub fn passages(
        &self,
        query_default: &QueryEncoding,
        candidates: &[PassageRecord],
    ) -> Result<Vec<ScoredUnit>> {
        query_default.expect_marker(QueryMarker::Passage)?;
        let mut out = Vec::with_capacity(candidates.len());
        for p in candidates {
            let (score, b) = maxsim_with_breakdown(query_default, p.embeddings.all_rows())?;
            out.push(ScoredUnit {
                passage_id: p.id.clone(),
                unit: Unit::Passage,
                score,
                breakdown: self.keep(b),
            });
        }
        sort_ranking(&mut out);
        Ok(out)
    }

    pub fn sentences(
        &self,
        query_prime: &QueryEncoding,
        query_default: &QueryEncoding,
        candidates: &[PassageRecord],
    ) -> Result<Vec<ScoredUnit>> {
        query_prime.expect_marker(QueryMarker::Sentence)?;
        query_default.expect_marker(QueryMarker::Passage)?;
        let mut out = Vec::new();
        for p in candidates {
            let passage_score = maxsim(query_default, p.embeddings.all_rows())?;
            for j in 0..p.sentences.len() {
                let (s, b) = maxsim_with_breakdown(query_prime, p.sentence_rows(j)?)?;
                out.push(ScoredUnit {
                    passage_id: p.id.clone(),
                    unit: Unit::Sentence(j),
                    score: s + self.cfg.alpha * passage_score,
                    breakdown: self.keep(b),
                });
            }
        }
        sort_ranking(&mut out);
        Ok(out)
    }

    pub fn propositions(
        &self,
        query_default: &QueryEncoding,
        candidates: &[PassageRecord],
    ) -> Result<Vec<ScoredUnit>> {
        query_default.expect_marker(QueryMarker::Passage)?;
        let mut out = Vec::new();
        for p in candidates {
            for k in 0..p.propositions.len() {
                let (s, b) = maxsim_with_breakdown(query_default, p.proposition_rows(k)?)?;
                out.push(ScoredUnit {
                    passage_id: p.id.clone(),
                    unit: Unit::Proposition(k),
                    score: s,
                    breakdown: self.keep(b),
                });
            }
        }
        sort_ranking(&mut out);
        Ok(out)
    }
}

pub fn rank_passages(
    query_default: &QueryEncoding,
    candidates: &[PassageRecord],
) -> Result<Vec<ScoredUnit>> {
    Ranker::default().passages(query_default, candidates)
}

pub fn rank_sentences(
    query_prime: &QueryEncoding,
    query_default: &QueryEncoding,
    candidates: &[PassageRecord],
    cfg: &RankingConfig,
) -> Result<Vec<ScoredUnit>> {
    Ranker::new(*cfg).sentences(query_prime, query_default, candidates)
}

pub fn rank_propositions(
    query_default: &QueryEncoding,
    candidates: &[PassageRecord],
) -> Result<Vec<ScoredUnit>> {
    Ranker::default().propositions(query_default, candidates)
}
