//! Answer-match ranking metrics and entailment-based citation metrics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::propcite::CitationResult;
use crate::text::{contains_normalized, normalize};

/// True iff any answer occurs in `unit_text` after case folding and
/// whitespace normalization.
pub fn hit<S: AsRef<str>>(unit_text: &str, answers: &[S]) -> bool {
    answers.iter().any(|a| contains_normalized(unit_text, a.as_ref()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QrelByAnswer {
    pub query_id: String,
    pub answers: Vec<String>,
}

impl QrelByAnswer {
    pub fn new(query_id: impl Into<String>, answers: Vec<String>) -> Result<Self> {
        let query_id = query_id.into();
        if answers.iter().all(|a| normalize(a).is_empty()) {
            return Err(Error::InvalidRecord {
                id: query_id,
                detail: "qrel needs at least one non-blank answer".into(),
            });
        }
        Ok(Self { query_id, answers })
    }
}

/// Ranked unit texts for one query, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    pub query_id: String,
    pub units: Vec<String>,
}

fn qrel_index(qrels: &[QrelByAnswer]) -> BTreeMap<&str, &QrelByAnswer> {
    qrels.iter().map(|q| (q.query_id.as_str(), q)).collect()
}

/// Fraction of queries with at least one hit among the top `k` units.
pub fn recall_at_k(rankings: &[Ranking], qrels: &[QrelByAnswer], k: usize) -> Result<f64> {
    if rankings.is_empty() {
        return Err(Error::Empty("query set"));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let index = qrel_index(qrels);
    let mut hits = 0usize;
    for r in rankings {
        let q = index.get(r.query_id.as_str()).ok_or_else(|| Error::InvalidRecord {
            id: r.query_id.clone(),
            detail: "no qrel for query".into(),
        })?;
        if r.units.is_empty() {
            return Err(Error::InvalidRecord {
                id: r.query_id.clone(),
                detail: "empty ranking".into(),
            });
        }
        if r.units.iter().take(k).any(|u| hit(u, &q.answers)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / rankings.len() as f64)
}

pub fn precision_at_1(rankings: &[Ranking], qrels: &[QrelByAnswer]) -> Result<f64> {
    recall_at_k(rankings, qrels, 1)
}

pub fn recall_at_5(rankings: &[Ranking], qrels: &[QrelByAnswer]) -> Result<f64> {
    recall_at_k(rankings, qrels, 5)
}

/// Judges whether a set of premise texts entails a claim.
pub trait EntailmentOracle {
    fn entails(&self, premises: &[&str], claim: &str) -> bool;
}

impl<T: EntailmentOracle + ?Sized> EntailmentOracle for &T {
    fn entails(&self, premises: &[&str], claim: &str) -> bool {
        (**self).entails(premises, claim)
    }
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "in", "is", "it", "its", "of", "on", "or",
    "that", "the", "this", "to", "was", "were", "with",
];

fn content_tokens(text: &str) -> BTreeSet<String> {
    normalize(text)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty() && !STOPWORDS.contains(t))
        .map(String::from)
        .collect()
}

/// Lexical stand-in for an entailment model: the claim is entailed when
/// every non-stopword token of the claim occurs in the premises. Claims
/// without content tokens and empty premise sets are never entailed.
#[derive(Debug, Clone, Copy, Default)]
pub struct TokenCoverageOracle;

impl EntailmentOracle for TokenCoverageOracle {
    fn entails(&self, premises: &[&str], claim: &str) -> bool {
        let claim = content_tokens(claim);
        if premises.is_empty() || claim.is_empty() {
            return false;
        }
        let mut have = BTreeSet::new();
        for p in premises {
            have.extend(content_tokens(p));
        }
        claim.is_subset(&have)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CitationScores {
    pub precision: f64,
    pub recall: f64,
    /// False when there were no citations at all; `precision` is then 0.
    pub precision_defined: bool,
    pub sentences: usize,
    pub citations: usize,
    pub precise_citations: usize,
    pub supported_sentences: usize,
}

/// Whether citation `which` of a sentence counts as precise. It must belong
/// to a citation set that jointly entails the claim, and it must not be
/// irrelevant: a citation is irrelevant when it does not entail the claim
/// alone while the other citations still do.
pub fn citation_is_precise<O: EntailmentOracle>(
    oracle: &O,
    premises: &[&str],
    which: usize,
    claim: &str,
    jointly_entailed: bool,
) -> bool {
    if !jointly_entailed {
        return false;
    }
    if premises.len() == 1 {
        return true;
    }
    let alone = oracle.entails(&premises[which..=which], claim);
    let rest: Vec<&str> = premises
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != which)
        .map(|(_, p)| *p)
        .collect();
    alone || !oracle.entails(&rest, claim)
}

/// Citation precision and recall over every sentence of `results`.
/// `contexts[i]` holds the context texts that `results[i]` cites into.
pub fn citation_scores<O: EntailmentOracle, S: AsRef<str>>(
    results: &[CitationResult],
    contexts: &[Vec<S>],
    oracle: &O,
) -> Result<CitationScores> {
    if results.len() != contexts.len() {
        return Err(Error::LengthMismatch {
            what: "citation results vs context lists",
            left: results.len(),
            right: contexts.len(),
        });
    }
    let (mut sentences, mut supported, mut citations, mut precise) = (0usize, 0usize, 0usize, 0usize);
    for (r, ctx) in results.iter().zip(contexts) {
        for s in &r.sentences {
            sentences += 1;
            let premises = s
                .cited
                .iter()
                .map(|&i| {
                    ctx.get(i).map(|c| c.as_ref()).ok_or(Error::IndexOutOfRange {
                        index: i,
                        len: ctx.len(),
                    })
                })
                .collect::<Result<Vec<&str>>>()?;
            let joint = oracle.entails(&premises, &s.text);
            supported += usize::from(joint);
            citations += premises.len();
            precise += (0..premises.len())
                .filter(|&k| citation_is_precise(oracle, &premises, k, &s.text, joint))
                .count();
        }
    }
    if sentences == 0 {
        return Err(Error::Empty("answer sentences"));
    }
    let precision_defined = citations > 0;
    Ok(CitationScores {
        precision: if precision_defined {
            precise as f64 / citations as f64
        } else {
            0.0
        },
        recall: supported as f64 / sentences as f64,
        precision_defined,
        sentences,
        citations,
        precise_citations: precise,
        supported_sentences: supported,
    })
}
