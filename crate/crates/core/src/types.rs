//! Domain types shared by every scoring path: token embedding matrices,
//! sentence spans and proposition masks over a passage, and query encodings
//! tagged with the marker they were produced under.
//!
//! Embedding rows are stored as `f64` in memory and must be unit-norm. The
//! on-disk format narrows them to binary32; scores are always accumulated in
//! double precision.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::error::{Error, Result};

/// Maximum allowed deviation of a row's Euclidean norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-4;

/// Token-level vectors for one query or one retrieval unit, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from row-major data, rejecting rows whose norm is not
    /// within [`NORM_TOLERANCE`] of 1.
    pub fn new(rows: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        check_shape(rows, dim, &data)?;
        for (r, row) in data.chunks_exact(dim).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: r });
            }
            let norm = l2_norm(row);
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::NotNormalized { row: r, norm });
            }
        }
        Ok(Self { rows, dim, data })
    }

    /// Builds a matrix by normalizing every row. Fails on zero-norm rows.
    pub fn normalized(rows: usize, dim: usize, mut data: Vec<f64>) -> Result<Self> {
        check_shape(rows, dim, &data)?;
        for (r, row) in data.chunks_exact_mut(dim).enumerate() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row: r });
            }
            let norm = l2_norm(row);
            if norm == 0.0 {
                return Err(Error::ZeroNorm { row: r });
            }
            row.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(Self { rows, dim, data })
    }

    /// For rows the caller just normalized itself.
    pub(crate) fn from_unit_rows_unchecked(rows: usize, dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * dim);
        Self { rows, dim, data }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dim, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// View over every row.
    pub fn all_rows(&self) -> Rows<'_> {
        Rows {
            matrix: self,
            selection: Selection::Range(0, self.rows),
        }
    }

    /// View over the rows of a contiguous sentence span.
    pub fn span_rows(&self, span: &SentenceSpan) -> Result<Rows<'_>> {
        if span.start >= span.end || span.end > self.rows {
            return Err(Error::InvalidSpan(format!(
                "[{}, {}) for {} rows",
                span.start, span.end, self.rows
            )));
        }
        Ok(Rows {
            matrix: self,
            selection: Selection::Range(span.start, span.end),
        })
    }

    /// View over an explicit, strictly increasing set of row indices.
    pub fn select_rows<'a>(&'a self, indices: &'a [usize]) -> Result<Rows<'a>> {
        if indices.is_empty() {
            return Err(Error::InvalidSpan(String::from("empty token mask")));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.rows) {
            return Err(Error::InvalidSpan(format!(
                "token {bad} out of range for {} rows",
                self.rows
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSpan(String::from(
                "token mask is not strictly increasing",
            )));
        }
        Ok(Rows {
            matrix: self,
            selection: Selection::Indices(indices),
        })
    }
}

fn check_shape(rows: usize, dim: usize, data: &[f64]) -> Result<()> {
    if rows == 0 || dim == 0 {
        return Err(Error::EmptyMatrix { rows, dim });
    }
    if data.len() != rows * dim {
        return Err(Error::ShapeMismatch {
            rows,
            dim,
            len: data.len(),
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum::<f64>())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy)]
enum Selection<'a> {
    Range(usize, usize),
    Indices(&'a [usize]),
}

/// Borrowed, non-empty selection of rows from an [`EmbeddingMatrix`].
///
/// Iteration yields `(absolute_row_index, row)` in selection order.
#[derive(Debug, Clone, Copy)]
pub struct Rows<'a> {
    matrix: &'a EmbeddingMatrix,
    selection: Selection<'a>,
}

impl<'a> Rows<'a> {
    pub fn len(&self) -> usize {
        match self.selection {
            Selection::Range(s, e) => e - s,
            Selection::Indices(ix) => ix.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim
    }

    pub fn iter(&self) -> RowsIter<'a> {
        RowsIter {
            rows: *self,
            pos: 0,
        }
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + 'a {
        self.iter().map(|(i, _)| i)
    }

    pub fn contains(&self, index: usize) -> bool {
        match self.selection {
            Selection::Range(s, e) => (s..e).contains(&index),
            Selection::Indices(ix) => ix.binary_search(&index).is_ok(),
        }
    }

    /// Copies the selected rows into an owned matrix.
    pub fn to_matrix(&self) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(self.len() * self.dim());
        for (_, row) in self.iter() {
            data.extend_from_slice(row);
        }
        EmbeddingMatrix {
            rows: self.len(),
            dim: self.dim(),
            data,
        }
    }
}

pub struct RowsIter<'a> {
    rows: Rows<'a>,
    pos: usize,
}

impl<'a> Iterator for RowsIter<'a> {
    type Item = (usize, &'a [f64]);

    fn next(&mut self) -> Option<Self::Item> {
        let index = match self.rows.selection {
            Selection::Range(s, e) => {
                let i = s + self.pos;
                if i >= e {
                    return None;
                }
                i
            }
            Selection::Indices(ix) => *ix.get(self.pos)?,
        };
        self.pos += 1;
        Some((index, self.rows.matrix.row(index)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rem = self.rows.len() - self.pos;
        (rem, Some(rem))
    }
}

impl ExactSizeIterator for RowsIter<'_> {}

/// Half-open token range `[start, end)` of one sentence inside a passage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
}

impl SentenceSpan {
    pub const fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Token mask of one proposition, aligned onto a sentence of the passage.
///
/// Masks may overlap each other; they are alignments, not a partition.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PropositionMask {
    pub sentence_idx: usize,
    pub token_indices: Vec<usize>,
}

impl PropositionMask {
    pub fn new(sentence_idx: usize, token_indices: Vec<usize>) -> Self {
        Self {
            sentence_idx,
            token_indices,
        }
    }
}

/// Either kind of span accepted by [`span_slice`].
#[derive(Debug, Clone, Copy)]
pub enum SpanRef<'a> {
    Sentence(&'a SentenceSpan),
    Proposition(&'a PropositionMask),
}

impl<'a> From<&'a SentenceSpan> for SpanRef<'a> {
    fn from(s: &'a SentenceSpan) -> Self {
        SpanRef::Sentence(s)
    }
}

impl<'a> From<&'a PropositionMask> for SpanRef<'a> {
    fn from(p: &'a PropositionMask) -> Self {
        SpanRef::Proposition(p)
    }
}

/// Returns the rows covered by a sentence span or proposition mask.
pub fn span_slice<'a>(
    matrix: &'a EmbeddingMatrix,
    span: impl Into<SpanRef<'a>>,
) -> Result<Rows<'a>> {
    match span.into() {
        SpanRef::Sentence(s) => matrix.span_rows(s),
        SpanRef::Proposition(p) => matrix.select_rows(&p.token_indices),
    }
}

/// One encoded retrieval unit with its sentence and proposition structure.
#[derive(Debug, Clone, PartialEq)]
pub struct PassageRecord {
    pub id: String,
    pub text: Option<String>,
    /// Surface text per sentence; empty when unknown.
    pub sentence_texts: Vec<String>,
    pub embeddings: EmbeddingMatrix,
    pub sentences: Vec<SentenceSpan>,
    pub propositions: Vec<PropositionMask>,
}

impl PassageRecord {
    /// Builds a record and rejects it if [`validate_passage`] reports anything.
    pub fn new(
        id: impl Into<String>,
        embeddings: EmbeddingMatrix,
        sentences: Vec<SentenceSpan>,
        propositions: Vec<PropositionMask>,
    ) -> Result<Self> {
        let record = Self {
            id: id.into(),
            text: None,
            sentence_texts: Vec::new(),
            embeddings,
            sentences,
            propositions,
        };
        record.ensure_valid()?;
        Ok(record)
    }

    /// A record whose single sentence spans every token.
    pub fn single_sentence(id: impl Into<String>, embeddings: EmbeddingMatrix) -> Self {
        let n = embeddings.rows();
        Self {
            id: id.into(),
            text: None,
            sentence_texts: Vec::new(),
            embeddings,
            sentences: alloc::vec![SentenceSpan::new(0, n)],
            propositions: Vec::new(),
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    /// Attaches one text per sentence span.
    pub fn with_sentence_texts(mut self, texts: Vec<String>) -> Result<Self> {
        self.sentence_texts = texts;
        self.ensure_valid()?;
        Ok(self)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_passage(self);
        match report.first() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidRecord {
                id: self.id.clone(),
                detail: format!("{v}"),
            }),
        }
    }

    pub fn token_count(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn sentence_rows(&self, idx: usize) -> Result<Rows<'_>> {
        let span = self.sentences.get(idx).ok_or(Error::IndexOutOfRange {
            index: idx,
            len: self.sentences.len(),
        })?;
        self.embeddings.span_rows(span)
    }

    pub fn proposition_rows(&self, idx: usize) -> Result<Rows<'_>> {
        let mask = self.propositions.get(idx).ok_or(Error::IndexOutOfRange {
            index: idx,
            len: self.propositions.len(),
        })?;
        if mask.sentence_idx >= self.sentences.len() {
            return Err(Error::InvalidSpan(format!(
                "proposition {idx} references sentence {}",
                mask.sentence_idx
            )));
        }
        self.embeddings.select_rows(&mask.token_indices)
    }
}

/// What a violation is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    EmptyId,
    NoSentences,
    EmptySpan,
    SpanOutOfRange,
    OverlappingSpans,
    GapBetweenSpans,
    IncompleteCoverage,
    EmptyProposition,
    UnknownSentence,
    TokenOutOfRange,
    TokenOutsideSentence,
    TokensNotIncreasing,
    SentenceTextCount,
}

impl ViolationKind {
    pub fn message(&self) -> &'static str {
        match self {
            Self::EmptyId => "empty id",
            Self::NoSentences => "no sentence spans",
            Self::EmptySpan => "empty span",
            Self::SpanOutOfRange => "span out of range",
            Self::OverlappingSpans => "overlapping spans",
            Self::GapBetweenSpans => "gap between spans",
            Self::IncompleteCoverage => "spans do not cover all tokens",
            Self::EmptyProposition => "empty proposition mask",
            Self::UnknownSentence => "proposition references unknown sentence",
            Self::TokenOutOfRange => "token index out of range",
            Self::TokenOutsideSentence => "token index outside referenced sentence",
            Self::TokensNotIncreasing => "token indices not strictly increasing",
            Self::SentenceTextCount => "sentence text count differs from span count",
        }
    }
}

/// One failed invariant, naming the offending field and element index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub index: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}: {} at index {i}", self.field, self.kind.message()),
            None => write!(f, "{}: {}", self.field, self.kind.message()),
        }
    }
}

/// Checks every span and mask invariant of a record. An empty report means
/// the record is well formed.
pub fn validate_passage(record: &PassageRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field, index, kind| out.push(Violation { field, index, kind });
    let n = record.embeddings.rows();

    if record.id.is_empty() {
        push("id", None, ViolationKind::EmptyId);
    }

    if record.sentences.is_empty() {
        push("sentences", None, ViolationKind::NoSentences);
    }
    for (i, s) in record.sentences.iter().enumerate() {
        if s.start >= s.end {
            push("sentences", Some(i), ViolationKind::EmptySpan);
        }
        if s.end > n {
            push("sentences", Some(i), ViolationKind::SpanOutOfRange);
        }
        if i > 0 {
            let prev = &record.sentences[i - 1];
            if s.start < prev.end {
                push("sentences", Some(i), ViolationKind::OverlappingSpans);
            } else if s.start > prev.end {
                push("sentences", Some(i), ViolationKind::GapBetweenSpans);
            }
        }
    }
    if let (Some(first), Some(last)) = (record.sentences.first(), record.sentences.last()) {
        if first.start != 0 || last.end != n {
            push("sentences", None, ViolationKind::IncompleteCoverage);
        }
    }

    if !record.sentence_texts.is_empty() && record.sentence_texts.len() != record.sentences.len() {
        push("sentence_texts", None, ViolationKind::SentenceTextCount);
    }

    for (i, p) in record.propositions.iter().enumerate() {
        if p.token_indices.is_empty() {
            push("propositions", Some(i), ViolationKind::EmptyProposition);
        }
        if p.token_indices.windows(2).any(|w| w[0] >= w[1]) {
            push("propositions", Some(i), ViolationKind::TokensNotIncreasing);
        }
        if p.token_indices.iter().any(|&t| t >= n) {
            push("propositions", Some(i), ViolationKind::TokenOutOfRange);
        }
        match record.sentences.get(p.sentence_idx) {
            None => push("propositions", Some(i), ViolationKind::UnknownSentence),
            Some(span) => {
                if p
                    .token_indices
                    .iter()
                    .any(|&t| t < n && !span.range().contains(&t))
                {
                    push("propositions", Some(i), ViolationKind::TokenOutsideSentence);
                }
            }
        }
    }
    out
}

/// Query marker the encoding was produced with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum QueryMarker {
    /// Default marker, used for passage-level (and proposition-level) ranking.
    Passage,
    /// Marker signalling within-passage sentence scoring.
    Sentence,
}

impl QueryMarker {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Passage => "passage-marker",
            Self::Sentence => "sentence-marker",
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Self::Passage => 0,
            Self::Sentence => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Passage),
            1 => Some(Self::Sentence),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryEncoding {
    pub id: String,
    pub marker: QueryMarker,
    pub embeddings: EmbeddingMatrix,
}

impl QueryEncoding {
    pub fn new(id: impl Into<String>, marker: QueryMarker, embeddings: EmbeddingMatrix) -> Self {
        Self {
            id: id.into(),
            marker,
            embeddings,
        }
    }

    pub fn expect_marker(&self, expected: QueryMarker) -> Result<()> {
        if self.marker == expected {
            Ok(())
        } else {
            Err(Error::MarkerMismatch {
                expected: expected.name(),
                actual: self.marker.name(),
            })
        }
    }
}

/// Knobs for combined sentence scoring, citation thresholding and softmaxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingConfig {
    /// Weight of the passage score added to an in-passage sentence score.
    pub alpha: f64,
    /// Minimum top-vs-runner-up gap for emitting a proposition citation.
    pub citation_margin: f64,
    pub temperature: f64,
}

impl Default for RankingConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            citation_margin: 1.0,
            temperature: 1.0,
        }
    }
}

impl RankingConfig {
    pub fn new(alpha: f64, citation_margin: f64, temperature: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            citation_margin,
            temperature,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.citation_margin >= 0.0 && self.citation_margin.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "citation margin must be >= 0, got {}",
                self.citation_margin
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn four_by_two() -> EmbeddingMatrix {
        EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.6, 0.8], [0.0, 1.0], [0.8, 0.6]]).unwrap()
    }

    fn record(sentences: Vec<SentenceSpan>, props: Vec<PropositionMask>) -> PassageRecord {
        PassageRecord {
            id: "p".into(),
            text: None,
            sentence_texts: Vec::new(),
            embeddings: four_by_two(),
            sentences,
            propositions: props,
        }
    }

    #[test]
    fn well_formed_spans_validate() {
        let r = record(vec![SentenceSpan::new(0, 2), SentenceSpan::new(2, 4)], vec![]);
        assert!(validate_passage(&r).is_empty());
    }

    #[test]
    fn overlap_is_reported_at_second_span() {
        let r = record(vec![SentenceSpan::new(0, 2), SentenceSpan::new(1, 4)], vec![]);
        let report = validate_passage(&r);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].kind, ViolationKind::OverlappingSpans);
        assert_eq!(report[0].index, Some(1));
        assert_eq!(
            report[0].to_string(),
            "sentences: overlapping spans at index 1"
        );
    }

    #[test]
    fn proposition_token_out_of_range() {
        let r = record(
            vec![SentenceSpan::new(0, 2), SentenceSpan::new(2, 4)],
            vec![PropositionMask::new(1, vec![3, 7])],
        );
        let report = validate_passage(&r);
        assert!(report
            .iter()
            .any(|v| v.kind == ViolationKind::TokenOutOfRange && v.index == Some(0)));
        assert!(report
            .iter()
            .any(|v| v.to_string().contains("token index out of range")));
    }

    #[test]
    fn gaps_coverage_and_cross_sentence_masks() {
        let r = record(vec![SentenceSpan::new(0, 1), SentenceSpan::new(2, 3)], vec![]);
        let kinds: Vec<_> = validate_passage(&r).into_iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::GapBetweenSpans));
        assert!(kinds.contains(&ViolationKind::IncompleteCoverage));

        let r = record(
            vec![SentenceSpan::new(0, 2), SentenceSpan::new(2, 4)],
            vec![
                PropositionMask::new(0, vec![1, 2]),
                PropositionMask::new(5, vec![0]),
                PropositionMask::new(0, vec![]),
                PropositionMask::new(1, vec![3, 2]),
            ],
        );
        let report = validate_passage(&r);
        let kinds: Vec<_> = report.iter().map(|v| (v.kind, v.index)).collect();
        assert!(kinds.contains(&(ViolationKind::TokenOutsideSentence, Some(0))));
        assert!(kinds.contains(&(ViolationKind::UnknownSentence, Some(1))));
        assert!(kinds.contains(&(ViolationKind::EmptyProposition, Some(2))));
        assert!(kinds.contains(&(ViolationKind::TokensNotIncreasing, Some(3))));
    }

    #[test]
    fn sentence_texts_must_match_spans() {
        let r = record(vec![SentenceSpan::new(0, 2), SentenceSpan::new(2, 4)], vec![]);
        assert!(r.clone().with_sentence_texts(vec!["a".into(), "b".into()]).is_ok());
        let err = r.with_sentence_texts(vec!["a".into()]).unwrap_err();
        assert!(err.to_string().contains("sentence text count"));
    }

    #[test]
    fn validation_is_idempotent() {
        let r = record(vec![SentenceSpan::new(0, 3), SentenceSpan::new(2, 4)], vec![]);
        assert_eq!(validate_passage(&r), validate_passage(&r));
    }

    #[test]
    fn span_slices() {
        let m = four_by_two();
        let s0 = SentenceSpan::new(0, 2);
        let rows = span_slice(&m, &s0).unwrap();
        assert_eq!(rows.to_matrix().as_slice(), &[1.0, 0.0, 0.6, 0.8]);

        let mask = PropositionMask::new(0, vec![1, 3]);
        let rows = span_slice(&m, &mask).unwrap();
        assert_eq!(rows.indices().collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(rows.to_matrix().as_slice(), &[0.6, 0.8, 0.8, 0.6]);

        assert!(matches!(
            span_slice(&m, &SentenceSpan::new(2, 6)),
            Err(Error::InvalidSpan(_))
        ));
    }

    #[test]
    fn ingest_rejects_unnormalized_rows() {
        assert!(matches!(
            EmbeddingMatrix::new(1, 2, vec![1.0, 1.0]),
            Err(Error::NotNormalized { row: 0, .. })
        ));
        assert!(matches!(
            EmbeddingMatrix::new(1, 2, vec![f64::NAN, 1.0]),
            Err(Error::NonFinite { row: 0 })
        ));
        assert!(matches!(
            EmbeddingMatrix::new(0, 2, vec![]),
            Err(Error::EmptyMatrix { .. })
        ));
        assert!(matches!(
            EmbeddingMatrix::normalized(1, 2, vec![0.0, 0.0]),
            Err(Error::ZeroNorm { row: 0 })
        ));
        let m = EmbeddingMatrix::normalized(1, 2, vec![3.0, 4.0]).unwrap();
        assert_eq!(m.row(0), &[0.6, 0.8]);
    }

    #[test]
    fn ranking_config_bounds() {
        assert!(RankingConfig::new(0.0, 0.0, 1.0).is_ok());
        assert!(RankingConfig::new(-1.0, 0.0, 1.0).is_err());
        assert!(RankingConfig::new(1.0, -0.5, 1.0).is_err());
        assert!(RankingConfig::new(1.0, 1.0, 0.0).is_err());
    }
}
