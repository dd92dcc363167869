//! Seeded synthetic QA corpus for toy training.
//!
//! Every query is two topic tokens plus a question-type token. Its positive
//! passage has sentences that repeat the topic tokens verbatim and one
//! sentence carrying an answer token of the query's type but no topic
//! token. Lexical overlap therefore identifies the passage but points at the
//! wrong sentence. Hard negatives share one topic token and carry an answer
//! token of a different type.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trainer::labels::{synth_sentence_labels, teacher_scores_from_labels};
use crate::trainer::loss::TeacherScores;
use crate::trainer::toy::{ToyExample, ToyPassage};
use crate::types::SentenceSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub queries: usize,
    pub passages: usize,
    pub sentences: usize,
    pub sentence_len: usize,
    pub topics: usize,
    pub question_types: usize,
    pub answers_per_type: usize,
    pub fillers: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            queries: 50,
            passages: 8,
            sentences: 4,
            sentence_len: 4,
            topics: 40,
            question_types: 6,
            answers_per_type: 4,
            fillers: 30,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn vocab(&self) -> usize {
        self.topics + self.question_types + self.question_types * self.answers_per_type + self.fillers
    }

    fn question_type(&self, w: usize) -> u32 {
        (self.topics + w) as u32
    }

    fn answer(&self, w: usize, k: usize) -> u32 {
        (self.topics + self.question_types + w * self.answers_per_type + k) as u32
    }

    fn filler(&self, f: usize) -> u32 {
        (self.topics + self.question_types * (1 + self.answers_per_type) + f) as u32
    }

    fn validate(&self) -> Result<()> {
        if self.queries == 0 {
            return Err(Error::Empty("synthetic corpus"));
        }
        if self.passages < 2 || self.sentences < 4 || self.sentence_len < 2 {
            return Err(Error::InvalidArgument(
                "synthetic corpus needs >= 2 passages, >= 4 sentences, >= 2 tokens per sentence".into(),
            ));
        }
        if self.topics < 4 || self.question_types < 2 || self.answers_per_type == 0 || self.fillers == 0 {
            return Err(Error::InvalidArgument("synthetic vocabulary too small".into()));
        }
        Ok(())
    }
}

/// Surface form of a token id.
pub fn token_text(id: u32) -> String {
    format!("w{id:03}")
}

pub fn tokens_text(ids: &[u32]) -> String {
    let mut s = String::new();
    for (i, &t) in ids.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        s.push_str(&token_text(t));
    }
    s
}

struct Gen<'a> {
    cfg: &'a SynthConfig,
    rng: ChaCha8Rng,
}

impl Gen<'_> {
    fn filler(&mut self) -> u32 {
        let f = self.rng.random_range(0..self.cfg.fillers);
        self.cfg.filler(f)
    }

    fn topic_except(&mut self, avoid: &[u32]) -> u32 {
        loop {
            let t = self.rng.random_range(0..self.cfg.topics) as u32;
            if !avoid.contains(&t) {
                return t;
            }
        }
    }

    /// A sentence holding `content` tokens padded with fillers, shuffled.
    fn sentence(&mut self, content: &[u32]) -> Vec<u32> {
        let mut s: Vec<u32> = content.to_vec();
        while s.len() < self.cfg.sentence_len {
            let f = self.filler();
            s.push(f);
        }
        s.truncate(self.cfg.sentence_len);
        s.shuffle(&mut self.rng);
        s
    }

    fn passage(&mut self, id: String, mut sentences: Vec<Vec<u32>>) -> ToyPassage {
        sentences.shuffle(&mut self.rng);
        let mut tokens = Vec::new();
        let mut spans = Vec::new();
        let mut texts = Vec::new();
        for s in &sentences {
            spans.push(SentenceSpan::new(tokens.len(), tokens.len() + s.len()));
            texts.push(tokens_text(s));
            tokens.extend_from_slice(s);
        }
        ToyPassage {
            id,
            tokens,
            sentences: spans,
            sentence_texts: texts,
        }
    }
}

/// Generates the corpus. Identical configs yield identical corpora.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Vec<ToyExample>> {
    cfg.validate()?;
    let mut g = Gen {
        cfg,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let mut corpus = Vec::with_capacity(cfg.queries);
    for q in 0..cfg.queries {
        let w = g.rng.random_range(0..cfg.question_types);
        let t1 = g.topic_except(&[]);
        let t2 = g.topic_except(&[t1]);
        let answer = cfg.answer(w, g.rng.random_range(0..cfg.answers_per_type));
        let mut query_tokens = alloc::vec![t1, t2, cfg.question_type(w)];
        query_tokens.shuffle(&mut g.rng);

        let mut passages = Vec::with_capacity(cfg.passages);
        let mut sents = Vec::with_capacity(cfg.sentences);
        sents.push(g.sentence(&[t1, t2]));
        let one = if g.rng.random_bool(0.5) { t1 } else { t2 };
        sents.push(g.sentence(&[one]));
        sents.push(g.sentence(&[answer]));
        while sents.len() < cfg.sentences {
            let x = g.topic_except(&[t1, t2]);
            sents.push(g.sentence(&[x]));
        }
        passages.push(sents);

        for n in 1..cfg.passages {
            let mut sents = Vec::with_capacity(cfg.sentences);
            let other_type = (w + 1 + g.rng.random_range(0..cfg.question_types - 1)) % cfg.question_types;
            let distractor = cfg.answer(other_type, g.rng.random_range(0..cfg.answers_per_type));
            if n % 2 == 1 {
                let one = if g.rng.random_bool(0.5) { t1 } else { t2 };
                let x = g.topic_except(&[t1, t2]);
                sents.push(g.sentence(&[one, x]));
            }
            sents.push(g.sentence(&[distractor]));
            while sents.len() < cfg.sentences {
                let x = g.topic_except(&[t1, t2]);
                sents.push(g.sentence(&[x]));
            }
            passages.push(sents);
        }
        passages.shuffle(&mut g.rng);

        let qid = format!("q{q:04}");
        let passages: Vec<ToyPassage> = passages
            .into_iter()
            .enumerate()
            .map(|(i, s)| g.passage(format!("{qid}-p{i}"), s))
            .collect();

        let answer_text = token_text(answer);
        let mut passage_labels = Vec::with_capacity(passages.len());
        let mut sentence_scores = Vec::with_capacity(passages.len());
        for p in &passages {
            let labels = synth_sentence_labels(&p.sentence_texts, &answer_text)?;
            passage_labels.push(u8::from(labels.contains(&1)));
            sentence_scores.push(teacher_scores_from_labels(&labels, &mut g.rng));
        }
        let passage_scores = teacher_scores_from_labels(&passage_labels, &mut g.rng);
        corpus.push(ToyExample {
            query_id: qid,
            query_tokens,
            answer: answer_text,
            passages,
            teacher: TeacherScores {
                passage_scores,
                sentence_scores,
            },
        });
    }
    Ok(corpus)
}
