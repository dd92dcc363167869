//! Gradient-descent loop for the toy encoder and the marker ablation.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scorer::maxsim_rows;
use crate::trainer::encoder::{EncoderMarker, ToyEncoder};
use crate::trainer::toy::{encode, example_loss, example_loss_and_grad, ToyExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainMode {
    /// Only the passage loss is optimized.
    PassageOnly,
    /// Passage plus sentence loss.
    MultiGranular,
}

impl TrainMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PassageOnly => "passage_only",
            Self::MultiGranular => "multi_granular",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "passage_only" => Some(Self::PassageOnly),
            "multi_granular" => Some(Self::MultiGranular),
            _ => None,
        }
    }
}

/// Which query marker the sentence loss is trained with and which one
/// sentence ranking uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarkerMode {
    /// Train and rank with the sentence marker.
    A1,
    /// Train with the sentence marker, rank with the default one.
    A2,
    /// Default marker for both.
    A3,
}

impl MarkerMode {
    pub const ALL: [MarkerMode; 3] = [Self::A1, Self::A2, Self::A3];

    pub fn train_marker(&self) -> EncoderMarker {
        match self {
            Self::A1 | Self::A2 => EncoderMarker::SentenceQuery,
            Self::A3 => EncoderMarker::Query,
        }
    }

    pub fn rank_marker(&self) -> EncoderMarker {
        match self {
            Self::A1 => EncoderMarker::SentenceQuery,
            Self::A2 | Self::A3 => EncoderMarker::Query,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::A1 => "A1",
            Self::A2 => "A2",
            Self::A3 => "A3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "A1" | "a1" => Some(Self::A1),
            "A2" | "a2" => Some(Self::A2),
            "A3" | "a3" => Some(Self::A3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    /// Passage-score weight in the combined sentence score used for
    /// sentence agreement.
    pub alpha: f64,
    pub mode: TrainMode,
    pub marker_mode: MarkerMode,
    /// Seeds the per-epoch example order.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 0.05,
            temperature: 1.0,
            alpha: 1.0,
            mode: TrainMode::MultiGranular,
            marker_mode: MarkerMode::A1,
            seed: 13,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "temperature must be finite and > 0, got {}",
                self.temperature
            )));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Corpus means after an epoch. Epoch 0 is the untrained encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub l_psg: f64,
    pub l_sent: f64,
    pub total: f64,
    pub sentence_agreement: f64,
    pub passage_agreement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub encoder: ToyEncoder,
    pub history: Vec<EpochMetrics>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    pub passage: f64,
    pub sentence: f64,
}

/// Fraction of examples where the student's top passage (default marker)
/// matches the teacher's, and where the student's top sentence over all
/// candidates (combined score, `rank_marker` on the sentence side) matches
/// the teacher's top sentence within its top passage.
pub fn agreement(enc: &ToyEncoder, corpus: &[ToyExample], rank_marker: EncoderMarker, alpha: f64) -> Result<Agreement> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let (mut psg_hits, mut sent_hits) = (0usize, 0usize);
    for ex in corpus {
        let e = encode(enc, ex, rank_marker)?;
        let target = ex.teacher_target();
        let mut best_p = (f64::NEG_INFINITY, 0usize);
        let mut best_s = (f64::NEG_INFINITY, (0usize, 0usize));
        for (i, (p, m)) in ex.passages.iter().zip(&e.pm).enumerate() {
            let (ps, _) = maxsim_rows(e.qd.all_rows(), m.all_rows())?;
            if ps > best_p.0 {
                best_p = (ps, i);
            }
            for (j, span) in p.sentences.iter().enumerate() {
                let (ss, _) = maxsim_rows(e.qs.all_rows(), m.span_rows(span)?)?;
                let combined = ss + alpha * ps;
                if combined > best_s.0 {
                    best_s = (combined, (i, j));
                }
            }
        }
        psg_hits += usize::from(best_p.1 == target.0);
        sent_hits += usize::from(best_s.1 == target);
    }
    let n = corpus.len() as f64;
    Ok(Agreement {
        passage: psg_hits as f64 / n,
        sentence: sent_hits as f64 / n,
    })
}

/// Corpus-mean losses and agreements for the given configuration.
pub fn evaluate(enc: &ToyEncoder, corpus: &[ToyExample], cfg: &TrainConfig, epoch: usize) -> Result<EpochMetrics> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let (mut l_psg, mut l_sent) = (0.0, 0.0);
    for ex in corpus {
        let r = example_loss(enc, ex, cfg.marker_mode.train_marker(), cfg.temperature)?;
        l_psg += r.l_psg;
        l_sent += r.l_sent;
    }
    let n = corpus.len() as f64;
    let (l_psg, l_sent) = (l_psg / n, l_sent / n);
    if !(l_psg.is_finite() && l_sent.is_finite()) {
        return Err(Error::Diverged { epoch });
    }
    let a = agreement(enc, corpus, cfg.marker_mode.rank_marker(), cfg.alpha)?;
    Ok(EpochMetrics {
        epoch,
        l_psg,
        l_sent,
        total: l_psg + l_sent,
        sentence_agreement: a.sentence,
        passage_agreement: a.passage,
    })
}

/// Per-example gradient descent with a constant step. Each epoch visits the
/// corpus in a seeded random order. Returns the trained encoder and one
/// metrics row per epoch, starting with epoch 0.
pub fn train_toy(corpus: &[ToyExample], init: ToyEncoder, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    for ex in corpus {
        ex.validate(init.vocab())?;
    }
    let mut enc = init;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let include_sentence = cfg.mode == TrainMode::MultiGranular;
    let marker = cfg.marker_mode.train_marker();

    let mut history = Vec::with_capacity(cfg.epochs + 1);
    history.push(evaluate(&enc, corpus, cfg, 0)?);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (report, grad) = example_loss_and_grad(&enc, &corpus[i], marker, cfg.temperature, include_sentence)
                .map_err(|e| overflow_as_divergence(e, epoch))?;
            if !report.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            if cfg.learning_rate == 0.0 {
                continue;
            }
            for (p, g) in enc.params_mut().iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
            if enc.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
        }
        history.push(evaluate(&enc, corpus, cfg, epoch).map_err(|e| overflow_as_divergence(e, epoch))?);
    }
    Ok(TrainOutcome { encoder: enc, history })
}

// Parameters that grew past f64 range surface as unnormalizable rows.
fn overflow_as_divergence(e: Error, epoch: usize) -> Error {
    match e {
        Error::ZeroNorm { .. } => Error::Diverged { epoch },
        other => other,
    }
}

/// One row of the marker ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    /// "baseline" for passage-only training, else the marker mode name.
    pub setting: &'static str,
    pub mode: TrainMode,
    pub train_marker: EncoderMarker,
    pub rank_marker: EncoderMarker,
    pub final_metrics: EpochMetrics,
}

/// Trains a passage-only baseline and one multi-granular model per marker
/// mode from the same initial encoder and seed.
pub fn marker_ablation(corpus: &[ToyExample], init: &ToyEncoder, base: &TrainConfig) -> Result<Vec<AblationRow>> {
    let mut runs = Vec::with_capacity(4);
    runs.push(("baseline", TrainMode::PassageOnly, MarkerMode::A3));
    for m in MarkerMode::ALL {
        runs.push((m.name(), TrainMode::MultiGranular, m));
    }
    let mut rows = Vec::with_capacity(runs.len());
    for (setting, mode, marker_mode) in runs {
        let cfg = TrainConfig {
            mode,
            marker_mode,
            ..*base
        };
        let out = train_toy(corpus, init.clone(), &cfg)?;
        let final_metrics = *out.history.last().expect("history has epoch 0");
        rows.push(AblationRow {
            setting,
            mode,
            train_marker: marker_mode.train_marker(),
            rank_marker: marker_mode.rank_marker(),
            final_metrics,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::fixture_b;
    use crate::trainer::synth::{synth_corpus, SynthConfig};
    use alloc::vec;

    fn small() -> (Vec<ToyExample>, ToyEncoder) {
        let sc = SynthConfig {
            queries: 6,
            ..Default::default()
        };
        let corpus = synth_corpus(&sc).unwrap();
        let enc = ToyEncoder::random(sc.vocab(), 8, 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        (corpus, enc)
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (corpus, enc) = small();
        let cfg = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            ..Default::default()
        };
        let out = train_toy(&corpus, enc.clone(), &cfg).unwrap();
        assert_eq!(out.encoder, enc);
        assert_eq!(out.history.len(), 3);
    }

    #[test]
    fn zero_epochs_gives_initial_row_only() {
        let (corpus, enc) = small();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        let out = train_toy(&corpus, enc, &cfg).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.history[0].epoch, 0);
    }

    #[test]
    fn training_is_reproducible() {
        let (corpus, enc) = small();
        let cfg = TrainConfig {
            epochs: 3,
            ..Default::default()
        };
        let a = train_toy(&corpus, enc.clone(), &cfg).unwrap();
        let b = train_toy(&corpus, enc, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixture_b_loss_decreases() {
        let (enc, ex) = fixture_b();
        let cfg = TrainConfig {
            epochs: 40,
            learning_rate: 0.1,
            ..Default::default()
        };
        let out = train_toy(&[ex], enc, &cfg).unwrap();
        let first = out.history.first().unwrap().total;
        let last = out.history.last().unwrap().total;
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn exploding_step_is_reported() {
        let (corpus, enc) = small();
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: f64::MAX,
            ..Default::default()
        };
        assert!(matches!(train_toy(&corpus, enc, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn bad_config_is_rejected() {
        let (corpus, enc) = small();
        for cfg in [
            TrainConfig {
                learning_rate: -1.0,
                ..Default::default()
            },
            TrainConfig {
                temperature: 0.0,
                ..Default::default()
            },
        ] {
            assert!(train_toy(&corpus, enc.clone(), &cfg).is_err());
        }
        assert!(train_toy(&[], enc, &TrainConfig::default()).is_err());
    }

    #[test]
    fn ablation_has_four_rows() {
        let (corpus, enc) = small();
        let cfg = TrainConfig {
            epochs: 1,
            ..Default::default()
        };
        let rows = marker_ablation(&corpus, &enc, &cfg).unwrap();
        let names: Vec<_> = rows.iter().map(|r| r.setting).collect();
        assert_eq!(names, vec!["baseline", "A1", "A2", "A3"]);
        assert_eq!(rows[2].train_marker, EncoderMarker::SentenceQuery);
        assert_eq!(rows[2].rank_marker, EncoderMarker::Query);
    }
}
