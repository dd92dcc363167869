//! Seeded synthetic citation benchmark.
//!
//! Words have fixed random directions; every token row is its word's
//! direction plus Gaussian noise, renormalized. A fact is a short run of
//! distinct words and each context passage states a few facts. Answer
//! sentences restate one or two facts, each fact tagged as a proposition.
//! Some contexts carry a near copy of another context's fact that differs in
//! a single word, which makes that fact's proposition score close for two
//! contexts.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::propcite::{AnswerSentence, GeneratedAnswer};
use crate::types::{EmbeddingMatrix, PassageRecord, PropositionMask, SentenceSpan};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiteBenchConfig {
    pub queries: usize,
    /// Contexts per query.
    pub contexts: usize,
    pub facts_per_context: usize,
    pub fact_len: usize,
    pub sentences: usize,
    /// Chance that an answer sentence restates two facts instead of one.
    pub two_fact_rate: f64,
    /// Chance that a context replaces one of its facts with a near copy of
    /// a fact from another context.
    pub near_copy_rate: f64,
    pub vocab: usize,
    pub dim: usize,
    /// Expected norm of the Gaussian noise added to a unit word direction
    /// for context rows.
    pub noise: f64,
    /// Same for answer sentence rows, which paraphrase rather than copy.
    pub answer_noise: f64,
    /// Chance that one token of a restated fact is encoded as another word
    /// while its text stays the same. When the fact has a near copy the
    /// token drifts to the copy's substituted word, otherwise to a random
    /// word.
    pub drift_rate: f64,
    pub seed: u64,
}

impl Default for CiteBenchConfig {
    fn default() -> Self {
        Self {
            queries: 200,
            contexts: 5,
            facts_per_context: 2,
            fact_len: 4,
            sentences: 3,
            two_fact_rate: 0.2,
            near_copy_rate: 0.5,
            vocab: 400,
            dim: 16,
            noise: 0.3,
            answer_noise: 0.5,
            drift_rate: 0.5,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiteBenchItem {
    pub answer: GeneratedAnswer,
    pub contexts: Vec<PassageRecord>,
    /// Context index each answer proposition was drawn from.
    pub sources: Vec<Vec<usize>>,
}

impl CiteBenchItem {
    pub fn context_texts(&self) -> Vec<String> {
        self.contexts.iter().map(|c| c.text.clone().unwrap_or_default()).collect()
    }
}

fn word(id: usize) -> String {
    format!("w{id:03}")
}

struct Bench<'a> {
    cfg: &'a CiteBenchConfig,
    rng: ChaCha8Rng,
    directions: Vec<Vec<f64>>,
}

impl Bench<'_> {
    fn row(&mut self, w: usize, noise: f64) -> Vec<f64> {
        let scale = noise / libm::sqrt(self.cfg.dim as f64);
        let mut v: Vec<f64> = self.directions[w].clone();
        for x in v.iter_mut() {
            let n: f64 = self.rng.sample(StandardNormal);
            *x += scale * n;
        }
        v
    }

    fn encode(&mut self, words: &[usize], noise: f64) -> Result<EmbeddingMatrix> {
        let mut data = Vec::with_capacity(words.len() * self.cfg.dim);
        for &w in words {
            let r = self.row(w, noise);
            data.extend(r);
        }
        EmbeddingMatrix::normalized(words.len(), self.cfg.dim, data)
    }

    fn fact(&mut self) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.cfg.vocab).collect();
        let (picked, _) = ids.partial_shuffle(&mut self.rng, self.cfg.fact_len);
        picked.to_vec()
    }
}

fn text_of(facts: &[Vec<usize>]) -> String {
    let clauses: Vec<String> = facts
        .iter()
        .map(|f| f.iter().map(|&w| word(w)).collect::<Vec<_>>().join(" "))
        .collect();
    let mut t = clauses.join(" and ");
    t.push('.');
    t
}

pub fn cite_bench(cfg: &CiteBenchConfig) -> Result<Vec<CiteBenchItem>> {
    if cfg.queries == 0 || cfg.contexts == 0 || cfg.facts_per_context == 0 || cfg.sentences == 0 {
        return Err(Error::Empty("citation benchmark"));
    }
    if cfg.fact_len < 2 || cfg.vocab < 4 * cfg.fact_len || cfg.dim == 0 {
        return Err(Error::InvalidArgument("citation benchmark vocabulary too small".into()));
    }
    if !(cfg.noise.is_finite() && cfg.noise >= 0.0 && cfg.answer_noise.is_finite() && cfg.answer_noise >= 0.0) {
        return Err(Error::InvalidArgument("noise must be finite and >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut directions = Vec::with_capacity(cfg.vocab);
    for _ in 0..cfg.vocab {
        let v: Vec<f64> = (0..cfg.dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        directions.push(v.into_iter().map(|x| x / n).collect());
    }
    let mut b = Bench { cfg, rng, directions };

    let mut items = Vec::with_capacity(cfg.queries);
    for q in 0..cfg.queries {
        let mut facts: Vec<Vec<Vec<usize>>> = (0..cfg.contexts)
            .map(|_| (0..cfg.facts_per_context).map(|_| b.fact()).collect())
            .collect();
        // Near copies overwrite the last fact so the first one of every
        // context stays unique and citable.
        let mut substituted: Vec<Option<(usize, usize)>> = alloc::vec![None; cfg.contexts];
        if cfg.contexts > 1 {
            for c in 0..cfg.contexts {
                if !b.rng.random_bool(cfg.near_copy_rate) {
                    continue;
                }
                let other = (c + 1 + b.rng.random_range(0..cfg.contexts - 1)) % cfg.contexts;
                let mut copy = facts[other][0].clone();
                let pos = b.rng.random_range(0..copy.len());
                let fresh = loop {
                    let w = b.rng.random_range(0..cfg.vocab);
                    if !copy.contains(&w) {
                        break w;
                    }
                };
                copy[pos] = fresh;
                if cfg.facts_per_context > 1 {
                    let last = cfg.facts_per_context - 1;
                    facts[c][last] = copy;
                    substituted[other] = Some((pos, fresh));
                }
            }
        }

        let mut contexts = Vec::with_capacity(cfg.contexts);
        for (c, fs) in facts.iter().enumerate() {
            let words: Vec<usize> = fs.concat();
            let m = b.encode(&words, cfg.noise)?;
            let spans = fs
                .iter()
                .scan(0, |start, f| {
                    let s = SentenceSpan::new(*start, *start + f.len());
                    *start += f.len();
                    Some(s)
                })
                .collect();
            let texts = fs.iter().map(|f| text_of(core::slice::from_ref(f))).collect();
            let rec = PassageRecord::new(format!("q{q:03}-c{c}"), m, spans, Vec::new())?
                .with_text(text_of(fs))
                .with_sentence_texts(texts)?;
            contexts.push(rec);
        }

        let mut sentences = Vec::with_capacity(cfg.sentences);
        let mut sources = Vec::with_capacity(cfg.sentences);
        for _ in 0..cfg.sentences {
            let n_facts = if cfg.contexts > 1 && b.rng.random_bool(cfg.two_fact_rate) { 2 } else { 1 };
            let mut ctx_ids: Vec<usize> = (0..cfg.contexts).collect();
            let (chosen, _) = ctx_ids.partial_shuffle(&mut b.rng, n_facts);
            let chosen = chosen.to_vec();
            let stated: Vec<Vec<usize>> = chosen.iter().map(|&c| facts[c][0].clone()).collect();
            let mut words: Vec<usize> = stated.concat();
            for (k, &c) in chosen.iter().enumerate() {
                if b.rng.random_bool(cfg.drift_rate) {
                    let (pos, w) = match substituted[c] {
                        Some(s) => s,
                        None => (b.rng.random_range(0..cfg.fact_len), b.rng.random_range(0..cfg.vocab)),
                    };
                    words[k * cfg.fact_len + pos] = w;
                }
            }
            let m = b.encode(&words, cfg.answer_noise)?;
            let props = (0..stated.len())
                .map(|k| PropositionMask::new(0, (k * cfg.fact_len..(k + 1) * cfg.fact_len).collect()))
                .collect();
            let mut s = AnswerSentence::new(text_of(&stated), m, props)?;
            // isolated encodings see the same drifted words, without the rest of the sentence
            let isolated = words
                .chunks(cfg.fact_len)
                .map(|f| b.encode(f, cfg.answer_noise))
                .collect::<Result<Vec<_>>>()?;
            s.isolated = Some(isolated);
            sentences.push(s);
            sources.push(chosen);
        }
        items.push(CiteBenchItem {
            answer: GeneratedAnswer {
                query_id: format!("q{q:03}"),
                sentences,
            },
            contexts,
            sources,
        });
    }
    Ok(items)
}
