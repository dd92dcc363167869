#![no_std]
//! Multi-granular late-interaction scoring, distillation losses, post-hoc
//! proposition citation and evaluation metrics.

extern crate alloc;

pub mod citebench;
pub mod error;
pub mod evalkit;
pub mod fixtures;
pub mod propcite;
pub mod scorer;
pub mod text;
pub mod trainer;
pub mod types;

pub use error::{Error, Result};
pub use scorer::{
    combined_sentence_score, maxsim, maxsim_rows, rank_passages, rank_propositions, rank_sentences, score_passage,
    score_proposition, score_sentence_in_passage, Ranker, ScoreBreakdown, ScoredUnit, Unit,
};
pub use types::{
    validate_passage, EmbeddingMatrix, PassageRecord, PropositionMask, QueryEncoding, QueryMarker, RankingConfig,
    Rows, SentenceSpan, Violation,
};
