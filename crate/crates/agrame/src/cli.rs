//! The `agrame` command line. Exit codes: 0 success, 2 usage error, 3 data
//! error. `AGRAME_THREADS` caps the worker pool.

use std::collections::{HashMap, HashSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use agrame_core::citebench::{cite_bench, CiteBenchConfig};
use agrame_core::evalkit::{citation_scores, precision_at_1, recall_at_5, Ranking, TokenCoverageOracle};
use agrame_core::propcite::{cite_variant, AnswerSentence, CitationResult, CitationVariant, GeneratedAnswer};
use agrame_core::trainer::synth::tokens_text;
use agrame_core::trainer::{
    marker_ablation, synth_corpus, toy_forward, train_toy, EncoderMarker, EpochMetrics, MarkerMode, SynthConfig,
    ToyEncoder, ToyExample, TrainConfig, TrainMode,
};
use agrame_core::{PassageRecord, PropositionMask, QueryEncoding, QueryMarker, Ranker, RankingConfig, ScoredUnit, Unit};
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::formats::{
    self, AnswerInput, BreakdownRecord, CandidateList, CitedAnswer, CorpusLine, PassageInput, QueryInput, RankRecord,
};
use crate::{checkpoint, storage};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const THREADS_ENV: &str = "AGRAME_THREADS";

#[derive(Debug, Parser)]
#[command(name = "agrame", version, about = "Multi-granularity late-interaction ranking and citation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a passage or query index.
    Index(IndexArgs),
    /// Rank indexed passages, sentences or propositions for each query.
    Rank(RankArgs),
    /// Write a seeded synthetic training corpus and its indexing inputs.
    SynthCorpus(SynthCorpusArgs),
    /// Write a seeded synthetic citation benchmark.
    SynthCite(SynthCiteArgs),
    /// Train the toy encoder on a corpus.
    TrainToy(TrainArgs),
    /// Run the passage-only baseline and the three marker settings.
    Ablate(AblateArgs),
    /// Add citations to generated answers.
    Cite(CiteArgs),
    /// Score rankings against answer qrels or citations against contexts.
    Eval(EvalArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Data(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

fn need(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        usage(format!("no such file: {}", path.display()))
    }
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Serialize)]
struct RunConfig<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    args: &'a T,
}

/// Writes the resolved arguments next to an output as `<out>.run.json`.
fn write_run_config<T: Serialize>(out: &Path, command: &'static str, args: &T) -> anyhow::Result<()> {
    let rc = RunConfig {
        tool: "agrame",
        version: env!("CARGO_PKG_VERSION"),
        command,
        args,
    };
    let mut text = serde_json::to_string_pretty(&rc)?;
    text.push('\n');
    formats::write_text(&with_suffix(out, ".run.json"), &text)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MarkerChoice {
    Passage,
    Sentence,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct IndexArgs {
    /// Passages as JSON lines.
    #[arg(long, conflicts_with = "queries", required_unless_present = "queries")]
    pub passages: Option<PathBuf>,
    /// Queries as JSON lines with token ids (toy encoder only).
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Existing .agrv file holding one embedding record per passage id.
    #[arg(long, conflicts_with = "toy_encoder", required_unless_present = "toy_encoder")]
    pub embeddings: Option<PathBuf>,
    /// Toy encoder checkpoint used to embed token ids.
    #[arg(long)]
    pub toy_encoder: Option<PathBuf>,
    /// Query markers to encode.
    #[arg(long, value_enum, default_value = "both")]
    pub marker: MarkerChoice,
    /// Output prefix; writes <out>.agrv (and <out>.spans.jsonl for passages).
    #[arg(long)]
    pub out: PathBuf,
}

fn cmd_index(a: &IndexArgs) -> CliResult<()> {
    let index_path = with_suffix(&a.out, ".agrv");
    for p in [&a.passages, &a.queries, &a.embeddings, &a.toy_encoder].into_iter().flatten() {
        need(p)?;
    }
    if a.queries.is_some() && a.toy_encoder.is_none() {
        return usage("--queries needs --toy-encoder");
    }
    let encoder = match &a.toy_encoder {
        Some(p) => Some(checkpoint::load(p).map_err(anyhow::Error::from)?),
        None => None,
    };
    let manifest = if let Some(qpath) = &a.queries {
        let enc = encoder.expect("checked above");
        let inputs: Vec<QueryInput> = formats::read_jsonl(qpath).map_err(anyhow::Error::from)?;
        let markers: &[QueryMarker] = match a.marker {
            MarkerChoice::Passage => &[QueryMarker::Passage],
            MarkerChoice::Sentence => &[QueryMarker::Sentence],
            MarkerChoice::Both => &[QueryMarker::Passage, QueryMarker::Sentence],
        };
        let mut records = Vec::with_capacity(inputs.len() * markers.len());
        for q in &inputs {
            for &m in markers {
                let e = toy_forward(&enc, &q.tokens, EncoderMarker::from(m)).with_context(|| format!("query {}", q.id))?;
                records.push(QueryEncoding::new(q.id.clone(), m, e));
            }
        }
        storage::write_query_index(&index_path, &records).map_err(anyhow::Error::from)?
    } else {
        let ppath = a.passages.as_ref().expect("clap requires passages or queries");
        let inputs: Vec<PassageInput> = formats::read_jsonl(ppath).map_err(anyhow::Error::from)?;
        let mut by_id = HashMap::new();
        if let Some(epath) = &a.embeddings {
            for r in storage::read_raw(epath).map_err(anyhow::Error::from)?.records {
                by_id.insert(r.id, r.embeddings);
            }
        }
        let mut records = Vec::with_capacity(inputs.len());
        for p in &inputs {
            let m = match &encoder {
                Some(enc) => {
                    let tokens = p.tokens.as_ref().ok_or_else(|| anyhow!("passage {} has no tokens to encode", p.id))?;
                    toy_forward(enc, tokens, EncoderMarker::Passage).with_context(|| format!("passage {}", p.id))?
                }
                None => by_id
                    .remove(&p.id)
                    .ok_or_else(|| anyhow!("no embeddings for passage {}", p.id))?,
            };
            let spans = p.spans(m.rows());
            let mut rec = PassageRecord::new(p.id.clone(), m, spans, p.masks()).with_context(|| format!("passage {}", p.id))?;
            if let Some(t) = &p.text {
                rec = rec.with_text(t.clone());
            }
            if !p.sentence_texts.is_empty() {
                rec = rec.with_sentence_texts(p.sentence_texts.clone()).with_context(|| format!("passage {}", p.id))?;
            }
            records.push(rec);
        }
        storage::write_passage_index(&index_path, &records).map_err(anyhow::Error::from)?
    };
    write_run_config(&a.out, "index", a)?;
    println!(
        "wrote {}: kind={} version={} dim={} records={}",
        index_path.display(),
        manifest.kind.name(),
        manifest.version,
        manifest.dim,
        manifest.record_count
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Passage,
    Sentence,
    Proposition,
}

impl Level {
    fn name(self) -> &'static str {
        match self {
            Self::Passage => "passage",
            Self::Sentence => "sentence",
            Self::Proposition => "proposition",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RankArgs {
    /// Passage index (.agrv with spans sidecar).
    #[arg(long)]
    pub index: PathBuf,
    /// Query index (.agrv of kind queries).
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, value_enum, default_value = "passage")]
    pub level: Level,
    /// Passage-score weight added to sentence scores.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
    /// Also emit per query token maxima for every ranked unit.
    #[arg(long)]
    pub breakdown: bool,
    /// Candidate passages per query as JSON lines; default is every passage
    /// for every query.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Output JSON lines.
    #[arg(long)]
    pub out: PathBuf,
}

fn unit_text(p: &PassageRecord, unit: &Unit) -> Option<String> {
    match unit {
        Unit::Passage => p.text.clone(),
        Unit::Sentence(j) => p.sentence_texts.get(*j).cloned(),
        Unit::Proposition(_) => None,
    }
}

fn rank_lines(
    qid: &str,
    level: Level,
    ranked: &[ScoredUnit],
    passages: &HashMap<&str, &PassageRecord>,
    breakdown: bool,
) -> Vec<String> {
    let mut out = Vec::new();
    for (i, u) in ranked.iter().enumerate() {
        let rec = RankRecord {
            record: "unit".into(),
            query_id: qid.to_string(),
            rank: i + 1,
            level: level.name().into(),
            passage_id: u.passage_id.clone(),
            unit_index: u.unit.index(),
            score: u.score,
            text: unit_text(passages[u.passage_id.as_str()], &u.unit),
        };
        out.push(serde_json::to_string(&rec).expect("record serializes"));
        if breakdown {
            if let Some(b) = &u.breakdown {
                out.push(serde_json::to_string(&BreakdownRecord::new(&rec, b)).expect("record serializes"));
            }
        }
    }
    out
}

fn cmd_rank(a: &RankArgs) -> CliResult<()> {
    need(&a.index)?;
    need(&a.queries)?;
    if let Some(c) = &a.candidates {
        need(c)?;
    }
    let cfg = RankingConfig {
        alpha: a.alpha,
        ..Default::default()
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let passages = storage::read_passage_index(&a.index).map_err(anyhow::Error::from)?;
    let queries = storage::read_query_index(&a.queries).map_err(anyhow::Error::from)?;
    let by_id: HashMap<&str, &PassageRecord> = passages.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut qmap: HashMap<(&str, QueryMarker), &QueryEncoding> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for q in &queries {
        if !qmap.contains_key(&(q.id.as_str(), QueryMarker::Passage)) && !qmap.contains_key(&(q.id.as_str(), QueryMarker::Sentence)) {
            order.push(q.id.as_str());
        }
        qmap.insert((q.id.as_str(), q.marker), q);
    }
    let jobs: Vec<(String, Vec<&PassageRecord>)> = match &a.candidates {
        Some(path) => {
            let lists: Vec<CandidateList> = formats::read_jsonl(path).map_err(anyhow::Error::from)?;
            lists
                .into_iter()
                .map(|c| {
                    let ps = c
                        .passages
                        .iter()
                        .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| anyhow!("candidate {id} of {} is not in the index", c.query_id)))
                        .collect::<anyhow::Result<Vec<_>>>()?;
                    Ok((c.query_id, ps))
                })
                .collect::<anyhow::Result<_>>()?
        }
        None => order.iter().map(|q| (q.to_string(), passages.iter().collect())).collect(),
    };
    let ranker = Ranker::new(cfg).with_breakdown(a.breakdown);
    let lookup = |qid: &str, m: QueryMarker| -> anyhow::Result<&QueryEncoding> {
        qmap.get(&(qid, m))
            .copied()
            .ok_or_else(|| anyhow!("query {qid} has no {} encoding", m.name()))
    };
    let per_query: Vec<anyhow::Result<Vec<String>>> = jobs
        .par_iter()
        .map(|(qid, cands)| {
            let cands: Vec<PassageRecord> = cands.iter().map(|p| (*p).clone()).collect();
            let mut ranked = match a.level {
                Level::Passage => ranker.passages(lookup(qid, QueryMarker::Passage)?, &cands),
                Level::Sentence => ranker.sentences(lookup(qid, QueryMarker::Sentence)?, lookup(qid, QueryMarker::Passage)?, &cands),
                Level::Proposition => ranker.propositions(lookup(qid, QueryMarker::Passage)?, &cands),
            }
            .with_context(|| format!("ranking query {qid}"))?;
            ranked.truncate(a.top_k);
            Ok(rank_lines(qid, a.level, &ranked, &by_id, a.breakdown))
        })
        .collect();
    let mut text = String::new();
    for lines in per_query {
        for l in lines? {
            text.push_str(&l);
            text.push('\n');
        }
    }
    formats::write_text(&a.out, &text).map_err(anyhow::Error::from)?;
    write_run_config(&a.out, "rank", a)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct SynthCorpusArgs {
    #[arg(long, default_value_t = 50)]
    pub queries: usize,
    /// Passages per query, one positive.
    #[arg(long, default_value_t = 8)]
    pub passages: usize,
    #[arg(long, default_value_t = 4)]
    pub sentences: usize,
    #[arg(long, default_value_t = 4)]
    pub sentence_len: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output prefix; writes <out>.corpus.jsonl, .passages.jsonl,
    /// .queries.jsonl, .candidates.jsonl and .qrels.tsv.
    #[arg(long)]
    pub out: PathBuf,
}

fn cmd_synth_corpus(a: &SynthCorpusArgs) -> CliResult<()> {
    let cfg = SynthConfig {
        queries: a.queries,
        passages: a.passages,
        sentences: a.sentences,
        sentence_len: a.sentence_len,
        seed: a.seed,
        ..Default::default()
    };
    let corpus = synth_corpus(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let lines: Vec<CorpusLine> = corpus.iter().map(CorpusLine::from).collect();
    let mut passages = Vec::new();
    let mut queries = Vec::new();
    let mut cands = Vec::new();
    let mut qrels = Vec::new();
    for ex in &corpus {
        queries.push(QueryInput {
            id: ex.query_id.clone(),
            tokens: ex.query_tokens.clone(),
            text: Some(tokens_text(&ex.query_tokens)),
        });
        cands.push(CandidateList {
            query_id: ex.query_id.clone(),
            passages: ex.passages.iter().map(|p| p.id.clone()).collect(),
        });
        qrels.push(agrame_core::evalkit::QrelByAnswer::new(ex.query_id.clone(), vec![ex.answer.clone()]).map_err(anyhow::Error::from)?);
        for p in &ex.passages {
            passages.push(PassageInput {
                id: p.id.clone(),
                text: Some(p.sentence_texts.join(" ")),
                tokens: Some(p.tokens.clone()),
                sentences: p.sentences.iter().map(|s| [s.start, s.end]).collect(),
                propositions: Vec::new(),
                sentence_texts: p.sentence_texts.clone(),
            });
        }
    }
    let w = |suffix: &str, text: String| formats::write_text(&with_suffix(&a.out, suffix), &text).map_err(anyhow::Error::from);
    w(".corpus.jsonl", formats::to_jsonl(&lines))?;
    w(".passages.jsonl", formats::to_jsonl(&passages))?;
    w(".queries.jsonl", formats::to_jsonl(&queries))?;
    w(".candidates.jsonl", formats::to_jsonl(&cands))?;
    w(".qrels.tsv", formats::qrels_tsv(&qrels))?;
    write_run_config(&a.out, "synth-corpus", a)?;
    println!(
        "wrote {} examples, {} passages, vocabulary {}",
        corpus.len(),
        passages.len(),
        cfg.vocab()
    );
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct SynthCiteArgs {
    #[arg(long, default_value_t = 200)]
    pub queries: usize,
    #[arg(long, default_value_t = 5)]
    pub contexts: usize,
    #[arg(long, default_value_t = 11)]
    pub seed: u64,
    /// Output prefix; writes <out>.contexts.agrv (+ spans),
    /// <out>.context-map.jsonl, <out>.answers.jsonl and
    /// <out>.answer-enc.agrv.
    #[arg(long)]
    pub out: PathBuf,
}

fn cmd_synth_cite(a: &SynthCiteArgs) -> CliResult<()> {
    let cfg = CiteBenchConfig {
        queries: a.queries,
        contexts: a.contexts,
        seed: a.seed,
        ..Default::default()
    };
    let items = cite_bench(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut contexts = Vec::new();
    let mut map = Vec::new();
    let mut answers = Vec::new();
    let mut encodings = Vec::new();
    for it in &items {
        let qid = &it.answer.query_id;
        map.push(CandidateList {
            query_id: qid.clone(),
            passages: it.contexts.iter().map(|c| c.id.clone()).collect(),
        });
        contexts.extend(it.contexts.iter().cloned());
        let mut sentences = Vec::new();
        for (si, s) in it.answer.sentences.iter().enumerate() {
            sentences.push(formats::AnswerSentenceInput {
                text: s.text.clone(),
                propositions: s.propositions.iter().map(|p| p.token_indices.clone()).collect(),
            });
            encodings.push(QueryEncoding::new(formats::sentence_encoding_id(qid, si), QueryMarker::Passage, s.encoding.clone()));
            for (k, m) in s.isolated.iter().flatten().enumerate() {
                encodings.push(QueryEncoding::new(formats::proposition_encoding_id(qid, si, k), QueryMarker::Passage, m.clone()));
            }
        }
        answers.push(AnswerInput {
            query_id: qid.clone(),
            sentences,
        });
    }
    storage::write_passage_index(&with_suffix(&a.out, ".contexts.agrv"), &contexts).map_err(anyhow::Error::from)?;
    storage::write_query_index(&with_suffix(&a.out, ".answer-enc.agrv"), &encodings).map_err(anyhow::Error::from)?;
    formats::write_jsonl(&with_suffix(&a.out, ".context-map.jsonl"), &map).map_err(anyhow::Error::from)?;
    formats::write_jsonl(&with_suffix(&a.out, ".answers.jsonl"), &answers).map_err(anyhow::Error::from)?;
    write_run_config(&a.out, "synth-cite", a)?;
    println!("wrote {} answers over {} contexts", answers.len(), contexts.len());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum ModeArg {
    #[value(name = "passage_only")]
    #[serde(rename = "passage_only")]
    PassageOnly,
    #[value(name = "multi_granular")]
    #[serde(rename = "multi_granular")]
    MultiGranular,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PassageOnly => Self::PassageOnly,
            ModeArg::MultiGranular => Self::MultiGranular,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MarkerModeArg {
    A1,
    A2,
    A3,
}

impl From<MarkerModeArg> for MarkerMode {
    fn from(m: MarkerModeArg) -> Self {
        match m {
            MarkerModeArg::A1 => Self::A1,
            MarkerModeArg::A2 => Self::A2,
            MarkerModeArg::A3 => Self::A3,
        }
    }
}

/// Model and optimizer knobs shared by `train-toy` and `ablate`.
#[derive(Debug, Args, Serialize)]
pub struct ToyArgs {
    /// Training corpus as JSON lines.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// Seeds the per-epoch example order.
    #[arg(long, default_value_t = 13)]
    pub seed: u64,
    /// Seeds the initial encoder.
    #[arg(long, default_value_t = 1)]
    pub init_seed: u64,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 16)]
    pub d_in: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Vocabulary size; defaults to the largest token id in the corpus plus one.
    #[arg(long)]
    pub vocab: Option<usize>,
}

impl ToyArgs {
    fn load(&self) -> CliResult<(Vec<ToyExample>, ToyEncoder)> {
        need(&self.corpus)?;
        let lines: Vec<CorpusLine> = formats::read_jsonl(&self.corpus).map_err(anyhow::Error::from)?;
        let corpus: Vec<ToyExample> = lines.into_iter().map(ToyExample::from).collect();
        let max_id = corpus
            .iter()
            .flat_map(|ex| ex.query_tokens.iter().chain(ex.passages.iter().flat_map(|p| &p.tokens)))
            .copied()
            .max();
        let vocab = match (self.vocab, max_id) {
            (Some(v), _) => v,
            (None, Some(m)) => m as usize + 1,
            (None, None) => return Err(CliError::Data(anyhow!("corpus is empty"))),
        };
        for ex in &corpus {
            ex.validate(vocab).with_context(|| format!("example {}", ex.query_id))?;
        }
        let enc = ToyEncoder::random(vocab, self.d_in, self.dim, &mut ChaCha8Rng::seed_from_u64(self.init_seed))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok((corpus, enc))
    }

    fn config(&self, mode: TrainMode, marker_mode: MarkerMode) -> CliResult<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            temperature: self.temperature,
            alpha: self.alpha,
            mode,
            marker_mode,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub toy: ToyArgs,
    #[arg(long, value_enum, default_value = "multi_granular")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value = "a1")]
    pub marker_mode: MarkerModeArg,
    /// Output prefix; writes <out>.metrics.csv and <out>.agre.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct MetricsRow {
    epoch: usize,
    l_psg: f64,
    l_sent: f64,
    total: f64,
    sentence_agreement: f64,
    passage_agreement: f64,
}

impl From<&EpochMetrics> for MetricsRow {
    fn from(m: &EpochMetrics) -> Self {
        Self {
            epoch: m.epoch,
            l_psg: m.l_psg,
            l_sent: m.l_sent,
            total: m.total,
            sentence_agreement: m.sentence_agreement,
            passage_agreement: m.passage_agreement,
        }
    }
}

fn csv_text<T: Serialize>(rows: impl IntoIterator<Item = T>) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?)?)
}

fn cmd_train_toy(a: &TrainArgs) -> CliResult<()> {
    let (corpus, init) = a.toy.load()?;
    let cfg = a.toy.config(a.mode.into(), a.marker_mode.into())?;
    let out = train_toy(&corpus, init, &cfg).context("training")?;
    let metrics = with_suffix(&a.out, ".metrics.csv");
    formats::write_text(&metrics, &csv_text(out.history.iter().map(MetricsRow::from))?).map_err(anyhow::Error::from)?;
    checkpoint::save(&with_suffix(&a.out, ".agre"), &out.encoder).map_err(anyhow::Error::from)?;
    write_run_config(&a.out, "train-toy", a)?;
    let last = out.history.last().expect("history has epoch 0");
    println!(
        "epoch {}: total {:.4} sentence agreement {:.3} passage agreement {:.3}",
        last.epoch, last.total, last.sentence_agreement, last.passage_agreement
    );
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub toy: ToyArgs,
    /// Output CSV, one row per setting.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct AblationCsvRow {
    setting: &'static str,
    mode: &'static str,
    train_marker: &'static str,
    rank_marker: &'static str,
    epochs: usize,
    l_psg: f64,
    l_sent: f64,
    total: f64,
    sentence_agreement: f64,
    passage_agreement: f64,
    sentence_agreement_vs_baseline: f64,
    passage_agreement_vs_baseline: f64,
}

fn encoder_marker_name(m: EncoderMarker) -> &'static str {
    match m {
        EncoderMarker::Query => "query",
        EncoderMarker::SentenceQuery => "sentence_query",
        EncoderMarker::Passage => "passage",
    }
}

fn cmd_ablate(a: &AblateArgs) -> CliResult<()> {
    let (corpus, init) = a.toy.load()?;
    let base = a.toy.config(TrainMode::MultiGranular, MarkerMode::A1)?;
    let rows = marker_ablation(&corpus, &init, &base).context("ablation")?;
    let b = rows[0].final_metrics;
    let csv_rows: Vec<AblationCsvRow> = rows
        .iter()
        .map(|r| AblationCsvRow {
            setting: r.setting,
            mode: r.mode.name(),
            train_marker: encoder_marker_name(r.train_marker),
            rank_marker: encoder_marker_name(r.rank_marker),
            epochs: r.final_metrics.epoch,
            l_psg: r.final_metrics.l_psg,
            l_sent: r.final_metrics.l_sent,
            total: r.final_metrics.total,
            sentence_agreement: r.final_metrics.sentence_agreement,
            passage_agreement: r.final_metrics.passage_agreement,
            sentence_agreement_vs_baseline: r.final_metrics.sentence_agreement - b.sentence_agreement,
            passage_agreement_vs_baseline: r.final_metrics.passage_agreement - b.passage_agreement,
        })
        .collect();
    formats::write_text(&a.out, &csv_text(&csv_rows)?).map_err(anyhow::Error::from)?;
    write_run_config(&a.out, "ablate", a)?;
    let table: Vec<Vec<String>> = csv_rows
        .iter()
        .map(|r| {
            vec![
                r.setting.to_string(),
                r.mode.to_string(),
                r.train_marker.to_string(),
                r.rank_marker.to_string(),
                format!("{:.3}", r.sentence_agreement),
                format!("{:.3}", r.passage_agreement),
            ]
        })
        .collect();
    print!("{}", render_table(&["setting", "mode", "train", "rank", "sent_agree", "psg_agree"], &table));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum VariantArg {
    #[value(name = "propcite")]
    #[serde(rename = "propcite")]
    PropCite,
    #[value(name = "prop_isolated")]
    #[serde(rename = "prop_isolated")]
    PropIsolated,
    #[value(name = "sentence_top1")]
    #[serde(rename = "sentence_top1")]
    SentenceTop1,
    #[value(name = "sentence_top2")]
    #[serde(rename = "sentence_top2")]
    SentenceTop2,
}

impl From<VariantArg> for CitationVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::PropCite => Self::PropCite,
            VariantArg::PropIsolated => Self::PropIsolated,
            VariantArg::SentenceTop1 => Self::SentenceTop1,
            VariantArg::SentenceTop2 => Self::SentenceTop2,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct CiteArgs {
    /// Generated answers as JSON lines.
    #[arg(long)]
    pub answers: PathBuf,
    /// Answer encodings: ids `<query>/<sentence>`, plus
    /// `<query>/<sentence>/<proposition>` for prop_isolated.
    #[arg(long)]
    pub encodings: PathBuf,
    /// Passage index holding the contexts.
    #[arg(long)]
    pub contexts: PathBuf,
    /// Context passage ids per query, in citation order.
    #[arg(long)]
    pub context_map: PathBuf,
    #[arg(long, value_enum, default_value = "propcite")]
    pub variant: VariantArg,
    /// Minimum top-vs-runner-up score gap for a proposition citation.
    #[arg(long, default_value_t = 1.0)]
    pub margin: f64,
    /// Output JSON lines.
    #[arg(long)]
    pub out: PathBuf,
}

fn cmd_cite(a: &CiteArgs) -> CliResult<()> {
    for p in [&a.answers, &a.encodings, &a.contexts, &a.context_map] {
        need(p)?;
    }
    if !(a.margin.is_finite() && a.margin >= 0.0) {
        return usage(format!("--margin must be finite and >= 0, got {}", a.margin));
    }
    let answers: Vec<AnswerInput> = formats::read_jsonl(&a.answers).map_err(anyhow::Error::from)?;
    let enc: HashMap<String, agrame_core::EmbeddingMatrix> = storage::read_query_index(&a.encodings)
        .map_err(anyhow::Error::from)?
        .into_iter()
        .map(|q| (q.id, q.embeddings))
        .collect();
    let passages = storage::read_passage_index(&a.contexts).map_err(anyhow::Error::from)?;
    let by_id: HashMap<&str, &PassageRecord> = passages.iter().map(|p| (p.id.as_str(), p)).collect();
    let lists: Vec<CandidateList> = formats::read_jsonl(&a.context_map).map_err(anyhow::Error::from)?;
    let ctx_of: HashMap<&str, &CandidateList> = lists.iter().map(|c| (c.query_id.as_str(), c)).collect();
    let variant = CitationVariant::from(a.variant);

    let cite_one = |ans: &AnswerInput| -> anyhow::Result<(CitedAnswer, Vec<usize>)> {
        let list = ctx_of
            .get(ans.query_id.as_str())
            .ok_or_else(|| anyhow!("no contexts for answer {}", ans.query_id))?;
        let contexts = list
            .passages
            .iter()
            .map(|id| by_id.get(id.as_str()).map(|p| (*p).clone()).ok_or_else(|| anyhow!("context {id} is not in the index")))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let mut sentences = Vec::with_capacity(ans.sentences.len());
        let mut no_props = Vec::with_capacity(ans.sentences.len());
        for (si, s) in ans.sentences.iter().enumerate() {
            let sid = formats::sentence_encoding_id(&ans.query_id, si);
            let m = enc.get(&sid).ok_or_else(|| anyhow!("no encoding {sid}"))?;
            let masks = s.propositions.iter().map(|t| PropositionMask::new(0, t.clone())).collect();
            let mut sent = AnswerSentence::new(s.text.clone(), m.clone(), masks).with_context(|| format!("sentence {sid}"))?;
            if variant == CitationVariant::PropIsolated {
                let iso = (0..s.propositions.len())
                    .map(|k| {
                        let pid = formats::proposition_encoding_id(&ans.query_id, si, k);
                        enc.get(&pid).cloned().ok_or_else(|| anyhow!("no encoding {pid}"))
                    })
                    .collect::<anyhow::Result<Vec<_>>>()?;
                sent.isolated = Some(iso);
            }
            no_props.push(s.propositions.is_empty());
            sentences.push(sent);
        }
        let answer = GeneratedAnswer {
            query_id: ans.query_id.clone(),
            sentences,
        };
        let result = CitationResult {
            query_id: answer.query_id.clone(),
            sentences: answer
                .sentences
                .iter()
                .map(|s| cite_variant(s, &contexts, variant, a.margin))
                .collect::<agrame_core::Result<Vec<_>>>()
                .with_context(|| format!("citing {}", ans.query_id))?,
        };
        let flagged: Vec<usize> = no_props.iter().enumerate().filter(|(_, &f)| f).map(|(i, _)| i).collect();
        Ok((CitedAnswer::new(&result, variant.name(), a.margin, list.passages.clone(), &no_props), flagged))
    };
    let results: Vec<anyhow::Result<(CitedAnswer, Vec<usize>)>> = answers.par_iter().map(cite_one).collect();
    let mut cited = Vec::with_capacity(results.len());
    for r in results {
        let (c, flagged) = r?;
        for i in flagged {
            eprintln!("audit: {} sentence {i} has no propositions", c.query_id);
        }
        cited.push(c);
    }
    formats::write_jsonl(&a.out, &cited).map_err(anyhow::Error::from)?;
    write_run_config(&a.out, "cite", a)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["rankings", "citations"])))]
pub struct EvalArgs {
    /// Ranking outputs of `rank`; one report row per file.
    #[arg(long, num_args = 1..)]
    pub rankings: Vec<PathBuf>,
    /// Citation outputs of `cite`; one report row per file.
    #[arg(long, num_args = 1..)]
    pub citations: Vec<PathBuf>,
    /// Answer qrels (TSV), needed for rankings.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Passage index with context texts, needed for citations.
    #[arg(long)]
    pub contexts: Option<PathBuf>,
    /// Output CSV.
    #[arg(long)]
    pub report: PathBuf,
}

#[derive(Serialize)]
struct RankingReportRow {
    source: String,
    level: String,
    queries: usize,
    p_at_1: f64,
    r_at_5: f64,
}

#[derive(Serialize)]
struct CitationReportRow {
    source: String,
    variant: String,
    margin: f64,
    sentences: usize,
    citations: usize,
    precision: f64,
    recall: f64,
    precision_defined: bool,
    single_citation_share: f64,
}

fn source_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn eval_rankings(a: &EvalArgs) -> CliResult<(String, Vec<Vec<String>>, &'static [&'static str])> {
    let qpath = a.qrels.as_ref().ok_or_else(|| CliError::Usage("--rankings needs --qrels".into()))?;
    need(qpath)?;
    let qrels = formats::read_qrels(qpath).map_err(anyhow::Error::from)?;
    let mut rows = Vec::new();
    for path in &a.rankings {
        need(path)?;
        let values: Vec<serde_json::Value> = formats::read_jsonl(path).map_err(anyhow::Error::from)?;
        let mut order: Vec<String> = Vec::new();
        let mut units: HashMap<String, Vec<(usize, String)>> = HashMap::new();
        let mut levels = HashSet::new();
        for v in values {
            if v.get("record").and_then(|r| r.as_str()) != Some("unit") {
                continue;
            }
            let r: RankRecord = serde_json::from_value(v).context("ranking record")?;
            let text = r
                .text
                .ok_or_else(|| anyhow!("{}: unit {} of {} has no text", path.display(), r.rank, r.query_id))?;
            levels.insert(r.level);
            if !units.contains_key(&r.query_id) {
                order.push(r.query_id.clone());
            }
            units.entry(r.query_id).or_default().push((r.rank, text));
        }
        let rankings: Vec<Ranking> = order
            .into_iter()
            .map(|q| {
                let mut u = units.remove(&q).unwrap_or_default();
                u.sort_by_key(|(rank, _)| *rank);
                Ranking {
                    query_id: q,
                    units: u.into_iter().map(|(_, t)| t).collect(),
                }
            })
            .collect();
        let mut levels: Vec<String> = levels.into_iter().collect();
        levels.sort();
        rows.push(RankingReportRow {
            source: source_name(path),
            level: levels.join("+"),
            queries: rankings.len(),
            p_at_1: precision_at_1(&rankings, &qrels).with_context(|| path.display().to_string())?,
            r_at_5: recall_at_5(&rankings, &qrels).with_context(|| path.display().to_string())?,
        });
    }
    let table = rows
        .iter()
        .map(|r| {
            vec![
                r.source.clone(),
                r.level.clone(),
                r.queries.to_string(),
                format!("{:.1}", 100.0 * r.p_at_1),
                format!("{:.1}", 100.0 * r.r_at_5),
            ]
        })
        .collect();
    Ok((csv_text(&rows)?, table, &["source", "level", "queries", "P@1", "R@5"]))
}

fn eval_citations(a: &EvalArgs) -> CliResult<(String, Vec<Vec<String>>, &'static [&'static str])> {
    let cpath = a.contexts.as_ref().ok_or_else(|| CliError::Usage("--citations needs --contexts".into()))?;
    need(cpath)?;
    let passages = storage::read_passage_index(cpath).map_err(anyhow::Error::from)?;
    let texts: HashMap<&str, &str> = passages
        .iter()
        .filter_map(|p| p.text.as_deref().map(|t| (p.id.as_str(), t)))
        .collect();
    let mut rows = Vec::new();
    for path in &a.citations {
        need(path)?;
        let cited: Vec<CitedAnswer> = formats::read_jsonl(path).map_err(anyhow::Error::from)?;
        let results: Vec<CitationResult> = cited.iter().map(CitedAnswer::to_result).collect();
        let ctx = cited
            .iter()
            .map(|c| {
                c.contexts
                    .iter()
                    .map(|id| texts.get(id.as_str()).copied().ok_or_else(|| anyhow!("context {id} has no text in the index")))
                    .collect::<anyhow::Result<Vec<&str>>>()
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let s = citation_scores(&results, &ctx, &TokenCoverageOracle).with_context(|| path.display().to_string())?;
        let single = results.iter().flat_map(|r| &r.sentences).filter(|s| s.cited.len() == 1).count();
        let mut variants: Vec<&str> = cited.iter().map(|c| c.variant.as_str()).collect();
        variants.sort_unstable();
        variants.dedup();
        rows.push(CitationReportRow {
            source: source_name(path),
            variant: variants.join("+"),
            margin: cited.first().map_or(0.0, |c| c.margin),
            sentences: s.sentences,
            citations: s.citations,
            precision: s.precision,
            recall: s.recall,
            precision_defined: s.precision_defined,
            single_citation_share: single as f64 / s.sentences as f64,
        });
    }
    let table = rows
        .iter()
        .map(|r| {
            vec![
                r.source.clone(),
                r.variant.clone(),
                format!("{}", r.margin),
                format!("{:.1}", 100.0 * r.precision),
                format!("{:.1}", 100.0 * r.recall),
                format!("{:.1}", 100.0 * r.single_citation_share),
            ]
        })
        .collect();
    Ok((csv_text(&rows)?, table, &["source", "variant", "margin", "precision", "recall", "1-cite %"]))
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let (csv, table, header) = if a.rankings.is_empty() {
        eval_citations(a)?
    } else {
        eval_rankings(a)?
    };
    formats::write_text(&a.report, &csv).map_err(anyhow::Error::from)?;
    write_run_config(&a.report, "eval", a)?;
    print!("{}", render_table(header, &table));
    Ok(())
}

/// Left-aligned columns separated by two spaces.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
        let s: Vec<String> = cells.zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", s.join("  ").trim_end());
    };
    line(&mut out, &mut header.iter().copied());
    for r in rows {
        line(&mut out, &mut r.iter().map(String::as_str));
    }
    out
}

fn thread_pool() -> CliResult<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => b = b.num_threads(n),
            _ => return usage(format!("{THREADS_ENV} must be a positive integer, got {v:?}")),
        }
    }
    b.build().map_err(|e| CliError::Data(anyhow!("thread pool: {e}")))
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let pool = thread_pool()?;
    pool.install(|| match &cli.command {
        Command::Index(a) => cmd_index(a),
        Command::Rank(a) => cmd_rank(a),
        Command::SynthCorpus(a) => cmd_synth_corpus(a),
        Command::SynthCite(a) => cmd_synth_cite(a),
        Command::TrainToy(a) => cmd_train_toy(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Cite(a) => cmd_cite(a),
        Command::Eval(a) => cmd_eval(a),
    })
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            EXIT_DATA
        }
    }
}
