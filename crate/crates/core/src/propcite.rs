//! Post-hoc citation of generated answers: each proposition of an answer
//! sentence is used as a query against the input contexts.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scorer::maxsim_rows;
use crate::types::{EmbeddingMatrix, PassageRecord, PropositionMask, Rows};

#[derive(Debug, Clone, PartialEq)]
pub struct AnswerSentence {
    pub text: String,
    /// Encoding of the whole sentence; proposition rows are sliced from it.
    pub encoding: EmbeddingMatrix,
    /// Token masks into `encoding`. The `sentence_idx` field is not used.
    pub propositions: Vec<PropositionMask>,
    /// One encoding per proposition, produced with the proposition alone as
    /// input. Only the isolated variant reads it.
    pub isolated: Option<Vec<EmbeddingMatrix>>,
}

impl AnswerSentence {
    pub fn new(text: impl Into<String>, encoding: EmbeddingMatrix, propositions: Vec<PropositionMask>) -> Result<Self> {
        let s = Self {
            text: text.into(),
            encoding,
            propositions,
            isolated: None,
        };
        for p in &s.propositions {
            s.encoding.select_rows(&p.token_indices)?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedAnswer {
    pub query_id: String,
    pub sentences: Vec<AnswerSentence>,
}

/// Audit record of one citation query.
#[derive(Debug, Clone, PartialEq)]
pub struct PropositionCitation {
    /// Cited context, or `None` when the margin test failed.
    pub chosen: Option<usize>,
    pub top_index: usize,
    pub top_score: f64,
    /// Second-best score; absent with a single context.
    pub runner_up: Option<f64>,
    /// Score of every context, in input order.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceCitations {
    pub text: String,
    /// Cited context indices, sorted and deduplicated.
    pub cited: Vec<usize>,
    /// One entry per proposition. The sentence-as-query variants hold a
    /// single entry for the whole sentence.
    pub propositions: Vec<PropositionCitation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CitationResult {
    pub query_id: String,
    pub sentences: Vec<SentenceCitations>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CitationVariant {
    /// Proposition rows sliced from the sentence encoding, with margin.
    PropCite,
    /// Propositions encoded on their own, with margin.
    PropIsolated,
    /// Whole sentence as query, cite the best context.
    SentenceTop1,
    /// Whole sentence as query, cite the best two contexts.
    SentenceTop2,
}

impl CitationVariant {
    pub const ALL: [CitationVariant; 4] = [Self::PropCite, Self::PropIsolated, Self::SentenceTop1, Self::SentenceTop2];

    pub fn name(&self) -> &'static str {
        match self {
            Self::PropCite => "propcite",
            Self::PropIsolated => "prop_isolated",
            Self::SentenceTop1 => "sentence_top1",
            Self::SentenceTop2 => "sentence_top2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

fn check_margin(margin: f64) -> Result<()> {
    if !margin.is_finite() || margin < 0.0 {
        return Err(Error::InvalidArgument(alloc::format!(
            "citation margin must be finite and >= 0, got {margin}"
        )));
    }
    Ok(())
}

/// MaxSim of `query` against every context's full token matrix.
pub fn score_contexts(query: Rows<'_>, contexts: &[PassageRecord]) -> Result<Vec<f64>> {
    if contexts.is_empty() {
        return Err(Error::Empty("contexts"));
    }
    contexts
        .iter()
        .map(|c| maxsim_rows(query, c.embeddings.all_rows()).map(|(s, _)| s))
        .collect()
}

/// Margin decision on precomputed context scores. The best context (lowest
/// index on ties) is cited unless `margin > 0` and it leads the runner-up by
/// less than `margin`. A single context is always cited.
pub fn cite_from_scores(scores: Vec<f64>, margin: f64) -> Result<PropositionCitation> {
    check_margin(margin)?;
    if scores.is_empty() {
        return Err(Error::Empty("contexts"));
    }
    let mut top = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[top] {
            top = i;
        }
    }
    let runner_up = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != top)
        .map(|(_, &s)| s)
        .reduce(f64::max);
    let top_score = scores[top];
    let chosen = match runner_up {
        Some(r) if margin > 0.0 && top_score - r < margin => None,
        _ => Some(top),
    };
    Ok(PropositionCitation {
        chosen,
        top_index: top,
        top_score,
        runner_up,
        scores,
    })
}

pub fn cite_proposition(query: Rows<'_>, contexts: &[PassageRecord], margin: f64) -> Result<PropositionCitation> {
    check_margin(margin)?;
    cite_from_scores(score_contexts(query, contexts)?, margin)
}

fn union(props: &[PropositionCitation]) -> Vec<usize> {
    let mut cited: Vec<usize> = props.iter().filter_map(|p| p.chosen).collect();
    cited.sort_unstable();
    cited.dedup();
    cited
}

/// Cites every proposition of the sentence with rows sliced from the
/// sentence encoding. A sentence without propositions cites nothing.
pub fn cite_sentence(sentence: &AnswerSentence, contexts: &[PassageRecord], margin: f64) -> Result<SentenceCitations> {
    check_margin(margin)?;
    if contexts.is_empty() {
        return Err(Error::Empty("contexts"));
    }
    let props = sentence
        .propositions
        .iter()
        .map(|p| cite_proposition(sentence.encoding.select_rows(&p.token_indices)?, contexts, margin))
        .collect::<Result<Vec<_>>>()?;
    Ok(SentenceCitations {
        text: sentence.text.clone(),
        cited: union(&props),
        propositions: props,
    })
}

/// Indices of the `k` best scores, best first, lowest index on ties.
fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

pub fn cite_variant(
    sentence: &AnswerSentence,
    contexts: &[PassageRecord],
    variant: CitationVariant,
    margin: f64,
) -> Result<SentenceCitations> {
    match variant {
        CitationVariant::PropCite => cite_sentence(sentence, contexts, margin),
        CitationVariant::PropIsolated => {
            check_margin(margin)?;
            if contexts.is_empty() {
                return Err(Error::Empty("contexts"));
            }
            let isolated = sentence
                .isolated
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("isolated proposition encodings missing".into()))?;
            if isolated.len() != sentence.propositions.len() {
                return Err(Error::LengthMismatch {
                    what: "isolated encodings vs propositions",
                    left: isolated.len(),
                    right: sentence.propositions.len(),
                });
            }
            let props = isolated
                .iter()
                .map(|m| cite_proposition(m.all_rows(), contexts, margin))
                .collect::<Result<Vec<_>>>()?;
            Ok(SentenceCitations {
                text: sentence.text.clone(),
                cited: union(&props),
                propositions: props,
            })
        }
        CitationVariant::SentenceTop1 | CitationVariant::SentenceTop2 => {
            let k = if variant == CitationVariant::SentenceTop1 { 1 } else { 2 };
            let scores = score_contexts(sentence.encoding.all_rows(), contexts)?;
            let mut cited = top_k(&scores, k);
            cited.sort_unstable();
            let audit = cite_from_scores(scores, 0.0)?;
            Ok(SentenceCitations {
                text: sentence.text.clone(),
                cited,
                propositions: alloc::vec![audit],
            })
        }
    }
}

/// Cites every sentence of an answer, in order.
pub fn cite_answer(
    answer: &GeneratedAnswer,
    contexts: &[PassageRecord],
    variant: CitationVariant,
    margin: f64,
) -> Result<CitationResult> {
    let sentences = answer
        .sentences
        .iter()
        .map(|s| cite_variant(s, contexts, variant, margin))
        .collect::<Result<Vec<_>>>()?;
    Ok(CitationResult {
        query_id: answer.query_id.clone(),
        sentences,
    })
}

/// Appends 1-based citation marks, placed before trailing sentence
/// punctuation: `"It rains [1][3]."`.
pub fn render_sentence(text: &str, cited: &[usize]) -> String {
    if cited.is_empty() {
        return String::from(text);
    }
    let trimmed = text.trim_end();
    let body = trimmed.trim_end_matches(['.', '!', '?']);
    let punct = &trimmed[body.len()..];
    let mut out = String::from(body.trim_end());
    out.push(' ');
    for c in cited {
        out.push_str(&alloc::format!("[{}]", c + 1));
    }
    out.push_str(punct);
    out
}
