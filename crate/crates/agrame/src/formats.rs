//! JSON-lines and TSV inputs and outputs of the command-line pipelines.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use agrame_core::evalkit::QrelByAnswer;
use agrame_core::propcite::{render_sentence, CitationResult, PropositionCitation, SentenceCitations};
use agrame_core::trainer::{TeacherScores, ToyExample, ToyPassage};
use agrame_core::{PropositionMask, ScoreBreakdown, SentenceSpan};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
}

pub type Result<T, E = FormatError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_jsonl(path, &text)
}

/// Blank lines are skipped; line numbers in errors are 1-based.
pub fn parse_jsonl<T: DeserializeOwned>(path: &Path, text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| FormatError::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    w.write_all(text.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_text(path, &to_jsonl(items))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionInput {
    pub sentence: usize,
    pub tokens: Vec<usize>,
}

/// A passage to index. `tokens` is needed only when the toy encoder embeds
/// it; `sentences` defaults to one sentence over every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageInput {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<u32>>,
    #[serde(default)]
    pub sentences: Vec<[usize; 2]>,
    #[serde(default)]
    pub propositions: Vec<PropositionInput>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sentence_texts: Vec<String>,
}

impl PassageInput {
    pub fn spans(&self, rows: usize) -> Vec<SentenceSpan> {
        if self.sentences.is_empty() {
            vec![SentenceSpan::new(0, rows)]
        } else {
            self.sentences.iter().map(|&[a, b]| SentenceSpan::new(a, b)).collect()
        }
    }

    pub fn masks(&self) -> Vec<PropositionMask> {
        self.propositions
            .iter()
            .map(|p| PropositionMask::new(p.sentence, p.tokens.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryInput {
    pub id: String,
    pub tokens: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// Candidate passages for one query: rerank candidates for `rank`, input
/// contexts for `cite`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub query_id: String,
    pub passages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusPassage {
    pub id: String,
    pub tokens: Vec<u32>,
    pub sentences: Vec<[usize; 2]>,
    #[serde(default)]
    pub sentence_texts: Vec<String>,
}

/// One training example of the toy corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusLine {
    pub query_id: String,
    pub query_tokens: Vec<u32>,
    pub answer: String,
    pub passages: Vec<CorpusPassage>,
    pub teacher_passage_scores: Vec<f64>,
    pub teacher_sentence_scores: Vec<Vec<f64>>,
}

impl From<&ToyExample> for CorpusLine {
    fn from(ex: &ToyExample) -> Self {
        Self {
            query_id: ex.query_id.clone(),
            query_tokens: ex.query_tokens.clone(),
            answer: ex.answer.clone(),
            passages: ex
                .passages
                .iter()
                .map(|p| CorpusPassage {
                    id: p.id.clone(),
                    tokens: p.tokens.clone(),
                    sentences: p.sentences.iter().map(|s| [s.start, s.end]).collect(),
                    sentence_texts: p.sentence_texts.clone(),
                })
                .collect(),
            teacher_passage_scores: ex.teacher.passage_scores.clone(),
            teacher_sentence_scores: ex.teacher.sentence_scores.clone(),
        }
    }
}

impl From<CorpusLine> for ToyExample {
    fn from(l: CorpusLine) -> Self {
        Self {
            query_id: l.query_id,
            query_tokens: l.query_tokens,
            answer: l.answer,
            passages: l
                .passages
                .into_iter()
                .map(|p| ToyPassage {
                    id: p.id,
                    tokens: p.tokens,
                    sentences: p.sentences.iter().map(|&[a, b]| SentenceSpan::new(a, b)).collect(),
                    sentence_texts: p.sentence_texts,
                })
                .collect(),
            teacher: TeacherScores {
                passage_scores: l.teacher_passage_scores,
                sentence_scores: l.teacher_sentence_scores,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSentenceInput {
    pub text: String,
    /// Token masks over the sentence encoding.
    #[serde(default)]
    pub propositions: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerInput {
    pub query_id: String,
    pub sentences: Vec<AnswerSentenceInput>,
}

/// Record id of an answer sentence encoding.
pub fn sentence_encoding_id(query_id: &str, sentence: usize) -> String {
    format!("{query_id}/{sentence}")
}

/// Record id of a proposition encoded on its own.
pub fn proposition_encoding_id(query_id: &str, sentence: usize, proposition: usize) -> String {
    format!("{query_id}/{sentence}/{proposition}")
}

/// One ranked unit. `unit_index` is the sentence or proposition index
/// within the passage and absent at passage level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub record: String,
    pub query_id: String,
    pub rank: usize,
    pub level: String,
    pub passage_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_index: Option<usize>,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// Per query token maxima and their argmax rows for one ranked unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRecord {
    pub record: String,
    pub query_id: String,
    pub rank: usize,
    pub passage_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit_index: Option<usize>,
    pub per_query_token_max: Vec<f64>,
    pub per_query_token_argmax: Vec<usize>,
}

impl BreakdownRecord {
    pub fn new(unit: &RankRecord, b: &ScoreBreakdown) -> Self {
        Self {
            record: "breakdown".into(),
            query_id: unit.query_id.clone(),
            rank: unit.rank,
            passage_id: unit.passage_id.clone(),
            unit_index: unit.unit_index,
            per_query_token_max: b.per_query_token_max.clone(),
            per_query_token_argmax: b.per_query_token_argmax.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionAudit {
    pub chosen: Option<usize>,
    pub top_index: usize,
    pub top_score: f64,
    pub runner_up: Option<f64>,
    pub scores: Vec<f64>,
}

impl From<&PropositionCitation> for PropositionAudit {
    fn from(p: &PropositionCitation) -> Self {
        Self {
            chosen: p.chosen,
            top_index: p.top_index,
            top_score: p.top_score,
            runner_up: p.runner_up,
            scores: p.scores.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitedSentence {
    pub text: String,
    pub rendered: String,
    /// 0-based context indices.
    pub cited: Vec<usize>,
    /// Set for sentences that came without proposition masks.
    #[serde(default)]
    pub no_propositions: bool,
    pub propositions: Vec<PropositionAudit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CitedAnswer {
    pub query_id: String,
    pub variant: String,
    pub margin: f64,
    pub contexts: Vec<String>,
    pub rendered: String,
    pub sentences: Vec<CitedSentence>,
}

impl CitedAnswer {
    pub fn new(r: &CitationResult, variant: &str, margin: f64, contexts: Vec<String>, no_props: &[bool]) -> Self {
        let sentences: Vec<CitedSentence> = r
            .sentences
            .iter()
            .zip(no_props)
            .map(|(s, &np)| CitedSentence {
                text: s.text.clone(),
                rendered: render_sentence(&s.text, &s.cited),
                cited: s.cited.clone(),
                no_propositions: np,
                propositions: s.propositions.iter().map(PropositionAudit::from).collect(),
            })
            .collect();
        Self {
            query_id: r.query_id.clone(),
            variant: variant.into(),
            margin,
            contexts,
            rendered: sentences.iter().map(|s| s.rendered.as_str()).collect::<Vec<_>>().join(" "),
            sentences,
        }
    }

    /// Back to the form the citation metrics take. Proposition audits are
    /// dropped since the metrics only read the cited sets.
    pub fn to_result(&self) -> CitationResult {
        CitationResult {
            query_id: self.query_id.clone(),
            sentences: self
                .sentences
                .iter()
                .map(|s| SentenceCitations {
                    text: s.text.clone(),
                    cited: s.cited.clone(),
                    propositions: Vec::new(),
                })
                .collect(),
        }
    }
}

/// `query_id<TAB>answer1|answer2|...`, one query per line. Blank lines and
/// lines starting with `#` are skipped.
pub fn parse_qrels(path: &Path, text: &str) -> Result<Vec<QrelByAnswer>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| FormatError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let (id, answers) = line.split_once('\t').ok_or_else(|| err("expected query_id<TAB>answers".into()))?;
        let answers = answers.split('|').map(str::to_string).collect();
        out.push(QrelByAnswer::new(id, answers).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

pub fn read_qrels(path: &Path) -> Result<Vec<QrelByAnswer>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_qrels(path, &text)
}

pub fn qrels_tsv(qrels: &[QrelByAnswer]) -> String {
    qrels
        .iter()
        .map(|q| format!("{}\t{}\n", q.query_id, q.answers.join("|")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use agrame_core::trainer::{synth_corpus, SynthConfig};

    #[test]
    fn corpus_lines_round_trip() {
        let corpus = synth_corpus(&SynthConfig {
            queries: 3,
            ..Default::default()
        })
        .unwrap();
        let lines: Vec<CorpusLine> = corpus.iter().map(CorpusLine::from).collect();
        let text = to_jsonl(&lines);
        let back: Vec<CorpusLine> = parse_jsonl(Path::new("c"), &text).unwrap();
        let back: Vec<ToyExample> = back.into_iter().map(ToyExample::from).collect();
        assert_eq!(back, corpus);
    }

    #[test]
    fn qrels_parse_and_reject() {
        let q = parse_qrels(Path::new("q"), "a\tparis|Paris France\n\n# note\nb\t1889\n").unwrap();
        assert_eq!(q.len(), 2);
        assert_eq!(q[0].answers, vec!["paris", "Paris France"]);
        assert_eq!(qrels_tsv(&q), "a\tparis|Paris France\nb\t1889\n");
        let e = parse_qrels(Path::new("q"), "a paris\n").unwrap_err();
        assert!(e.to_string().contains("q:1"), "{e}");
        assert!(parse_qrels(Path::new("q"), "a\t \n").is_err());
    }

    #[test]
    fn jsonl_errors_carry_line_numbers() {
        let e = parse_jsonl::<QueryInput>(Path::new("f"), "{\"id\":\"a\",\"tokens\":[1]}\n\nnot json\n").unwrap_err();
        assert!(e.to_string().starts_with("f:3:"), "{e}");
    }
}
