//! Multi-granular distillation losses, the toy encoder and its training loop.

pub mod encoder;
pub mod gradcheck;
pub mod labels;
pub mod loss;
pub mod synth;
pub mod toy;
pub mod train;

pub use encoder::{toy_forward, EncoderMarker, ToyEncoder};
pub use gradcheck::{grad_check, is_kink_free, relative_error, toy_grad_check, GradCheckReport};
pub use labels::{synth_sentence_labels, teacher_scores_from_labels};
pub use loss::{
    aggregate_sentence_loss, kl_div, loss_report, passage_loss, score_gradients, sentence_loss_per_passage,
    softmax_dist, total_loss, EncodedStudent, LossReport, PassageSet, StudentScorer, StudentScores,
    TeacherScores,
};
pub use synth::{synth_corpus, SynthConfig};
pub use toy::{encode_passages, example_loss, example_loss_and_grad, ToyExample, ToyPassage};
pub use train::{
    agreement, evaluate, marker_ablation, train_toy, AblationRow, EpochMetrics, MarkerMode, TrainConfig,
    TrainMode, TrainOutcome,
};
