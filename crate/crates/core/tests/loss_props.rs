mod common;

use agrame_core::fixtures::{fixture_b, fixture_b_embedded};
use agrame_core::trainer::loss::{
    aggregate_sentence_loss, kl_div, loss_report, passage_loss, sentence_loss_per_passage, softmax_dist,
};
use agrame_core::trainer::{toy_grad_check, total_loss, EncodedStudent, EncoderMarker, StudentScores, TeacherScores};
use common::{brute_maxsim, pick, rows_of};
use proptest::prelude::*;

// Straight-line reference: naive exp/sum softmax and p ln(p/q).
fn ref_softmax(x: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

fn ref_kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum()
}

#[test]
fn fixture_b_total_matches_reference() {
    let fx = fixture_b_embedded();
    let student = EncodedStudent {
        query_default: &fx.query_default,
        query_sentence: &fx.query_sentence,
    };
    let got = total_loss(&fx.set, &fx.teacher, &student, 1.0).unwrap();

    let qd = rows_of(&fx.query_default.embeddings);
    let qs = rows_of(&fx.query_sentence.embeddings);
    let mut s_psg = Vec::new();
    let mut s_sent = Vec::new();
    for p in &fx.set.passages {
        s_psg.push(brute_maxsim(&qd, &rows_of(&p.embeddings)));
        s_sent.push(
            p.sentences
                .iter()
                .map(|sp| brute_maxsim(&qs, &pick(&p.embeddings, sp.range())))
                .collect::<Vec<_>>(),
        );
    }
    let l_psg = ref_kl(&ref_softmax(&fx.teacher.passage_scores), &ref_softmax(&s_psg));
    let w = ref_softmax(&fx.teacher.passage_scores);
    let mut l_sent = 0.0;
    for i in 0..s_sent.len() {
        let l = ref_kl(&ref_softmax(&fx.teacher.sentence_scores[i]), &ref_softmax(&s_sent[i]));
        l_sent += w[i] * l;
    }
    assert!((got.l_psg - l_psg).abs() <= 1e-9);
    assert!((got.l_sent - l_sent).abs() <= 1e-9);
    assert!((got.total - (l_psg + l_sent)).abs() <= 1e-9);
}

#[test]
fn kl_hand_value() {
    let v = kl_div(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
    assert!((v - core::f64::consts::LN_2).abs() < 1e-12);
    // teacher softmax([1, 0]) against a uniform student
    let t = ref_softmax(&[1.0, 0.0]);
    let v = kl_div(&t, &[0.5, 0.5]).unwrap();
    assert!((v - 0.1110).abs() < 1e-3, "{v}");
    assert!((passage_loss(&[0.0, 0.0], &[1.0, 0.0], 1.0).unwrap() - v).abs() < 1e-12);
}

#[test]
fn fixture_b_gradient_matches_finite_differences() {
    let (enc, ex) = fixture_b();
    let r = toy_grad_check(&enc, &ex, EncoderMarker::SentenceQuery, 1.0, 1e-5).unwrap();
    assert!(r.max_relative_error < 1e-4, "{r:?}");
}

fn scores(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-8.0f64..8.0, n)
}

fn score_set() -> impl Strategy<Value = (StudentScores, TeacherScores)> {
    proptest::collection::vec(1usize..5, 2..6).prop_flat_map(|counts| {
        let k = counts.len();
        let sent = |c: &Vec<usize>| c.iter().map(|&n| scores(n)).collect::<Vec<_>>();
        (scores(k), sent(&counts), scores(k), sent(&counts)).prop_map(|(sp, ss, tp, ts)| {
            (
                StudentScores {
                    passage_scores: sp,
                    sentence_scores: ss,
                },
                TeacherScores {
                    passage_scores: tp,
                    sentence_scores: ts,
                },
            )
        })
    })
}

proptest! {
    #[test]
    fn kl_is_non_negative_and_zero_on_equal(s in scores(5), t in scores(5)) {
        let v = passage_loss(&s, &t, 1.0).unwrap();
        prop_assert!(v >= 0.0);
        prop_assert!(passage_loss(&t, &t, 1.0).unwrap().abs() <= 1e-12);
        let ps = softmax_dist(&s, 1.0).unwrap();
        let pt = softmax_dist(&t, 1.0).unwrap();
        let gap = ps.iter().zip(&pt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > 1e-3 {
            prop_assert!(v > 0.0);
        }
    }

    #[test]
    fn report_components_add_up((student, teacher) in score_set()) {
        let r = loss_report(&student, &teacher, 1.0).unwrap();
        prop_assert!((r.total - (r.l_psg + r.l_sent)).abs() <= 1e-9);
        prop_assert!(r.l_psg >= 0.0 && r.l_sent >= 0.0);
        for (i, l) in r.per_passage_l_s.iter().enumerate() {
            if student.sentence_scores[i].len() == 1 {
                prop_assert_eq!(*l, 0.0);
            }
        }
    }

    #[test]
    fn aggregate_is_a_convex_combination(ls in proptest::collection::vec(0.0f64..10.0, 2..8), seed in scores(8)) {
        let t = &seed[..ls.len()];
        let agg = aggregate_sentence_loss(&ls, t, 1.0).unwrap();
        let lo = ls.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(agg >= lo - 1e-12 && agg <= hi + 1e-12);
    }

    #[test]
    fn shifting_scores_changes_nothing((student, teacher) in score_set(), c in -50.0f64..50.0) {
        let base = loss_report(&student, &teacher, 1.0).unwrap();
        let shift = |v: &[f64]| v.iter().map(|x| x + c).collect::<Vec<_>>();
        let s2 = StudentScores {
            passage_scores: shift(&student.passage_scores),
            sentence_scores: student.sentence_scores.iter().map(|v| shift(v)).collect(),
        };
        let t2 = TeacherScores {
            passage_scores: shift(&teacher.passage_scores),
            sentence_scores: teacher.sentence_scores.iter().map(|v| shift(v)).collect(),
        };
        let shifted = loss_report(&s2, &t2, 1.0).unwrap();
        prop_assert!((base.total - shifted.total).abs() <= 1e-9);
        prop_assert!((sentence_loss_per_passage(&student.passage_scores, &teacher.passage_scores, 1.0).unwrap()
            - sentence_loss_per_passage(&s2.passage_scores, &teacher.passage_scores, 1.0).unwrap()).abs() <= 1e-9);
    }
}
