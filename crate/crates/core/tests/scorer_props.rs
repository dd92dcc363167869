mod common;

use agrame_core::scorer::{combined_sentence_score, score_passage, score_proposition, score_sentence_in_passage};
use agrame_core::{
    maxsim_rows, rank_sentences, EmbeddingMatrix, PassageRecord, PropositionMask, QueryEncoding, QueryMarker,
    RankingConfig, SentenceSpan, Unit,
};
use common::*;
use proptest::prelude::*;

fn as_sentence(q: &QueryEncoding) -> QueryEncoding {
    QueryEncoding::new(q.id.clone(), QueryMarker::Sentence, q.embeddings.clone())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn every_op_matches_nested_loops(
        q in query(16, 8, QueryMarker::Passage),
        p in passage("p", 16, 8),
        alpha in 0.0f64..4.0,
    ) {
        prop_assume!(q.embeddings.dim() == p.embeddings.dim());
        let qs = as_sentence(&q);
        let qr = rows_of(&q.embeddings);
        let full = brute_maxsim(&qr, &rows_of(&p.embeddings));
        prop_assert!((score_passage(&q, &p).unwrap() - full).abs() <= 1e-6);
        let cfg = RankingConfig { alpha, ..Default::default() };
        for (j, span) in p.sentences.iter().enumerate() {
            let s = brute_maxsim(&qr, &pick(&p.embeddings, span.range()));
            prop_assert!((score_sentence_in_passage(&qs, &p, j).unwrap() - s).abs() <= 1e-6);
            let c = combined_sentence_score(&qs, &q, &p, j, &cfg).unwrap();
            prop_assert!((c - (s + alpha * full)).abs() <= 1e-6);
        }
        for (k, prop) in p.propositions.iter().enumerate() {
            let s = brute_maxsim(&qr, &pick(&p.embeddings, prop.token_indices.iter().copied()));
            prop_assert!((score_proposition(&q, &p, k).unwrap() - s).abs() <= 1e-6);
        }
    }

    #[test]
    fn full_max_decomposes_over_sentences(q in query(16, 8, QueryMarker::Passage), p in passage("p", 16, 8)) {
        let (full, fb) = maxsim_rows(q.embeddings.all_rows(), p.embeddings.all_rows()).unwrap();
        let per_sentence: Vec<_> = p
            .sentences
            .iter()
            .map(|s| maxsim_rows(q.embeddings.all_rows(), p.embeddings.span_rows(s).unwrap()).unwrap().1)
            .collect();
        let mut recomposed = 0.0;
        for i in 0..q.embeddings.rows() {
            let m = per_sentence.iter().map(|b| b.per_query_token_max[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(m, fb.per_query_token_max[i]);
            recomposed += m;
        }
        prop_assert_eq!(recomposed, full);
    }

    #[test]
    fn full_dominates_sentence_dominates_proposition(q in query(16, 8, QueryMarker::Passage), p in passage("p", 16, 8)) {
        let full = score_passage(&q, &p).unwrap();
        let qs = as_sentence(&q);
        for (k, prop) in p.propositions.iter().enumerate() {
            let s = score_sentence_in_passage(&qs, &p, prop.sentence_idx).unwrap();
            let pr = score_proposition(&q, &p, k).unwrap();
            prop_assert!(full >= s && s >= pr);
        }
    }

    #[test]
    fn breakdown_sums_to_score(q in query(16, 8, QueryMarker::Passage), p in passage("p", 16, 8)) {
        let (s, b) = maxsim_rows(q.embeddings.all_rows(), p.embeddings.all_rows()).unwrap();
        prop_assert!((b.total() - s).abs() <= 1e-6);
        prop_assert_eq!(b.per_query_token_argmax.len(), q.embeddings.rows());
    }

    #[test]
    fn permuting_tokens_with_remapped_spans_keeps_scores(
        q in query(8, 4, QueryMarker::Passage),
        p in passage("p", 12, 4),
        seed in any::<u64>(),
    ) {
        // Shuffle sentence order and tokens within each sentence, remapping
        // spans and proposition masks accordingly.
        let n = p.embeddings.rows();
        let mut order: Vec<usize> = (0..p.sentences.len()).collect();
        let mut state = seed | 1;
        let mut next = || { state ^= state << 13; state ^= state >> 7; state ^= state << 17; state };
        for i in (1..order.len()).rev() { order.swap(i, (next() % (i as u64 + 1)) as usize); }
        let mut new_pos = vec![0usize; n];
        let mut perm = Vec::with_capacity(n);
        let mut spans = Vec::new();
        let mut sentence_map = vec![0usize; p.sentences.len()];
        for (new_s, &old_s) in order.iter().enumerate() {
            let sp = p.sentences[old_s];
            let mut toks: Vec<usize> = sp.range().collect();
            for i in (1..toks.len()).rev() { toks.swap(i, (next() % (i as u64 + 1)) as usize); }
            let start = perm.len();
            for t in toks { new_pos[t] = perm.len(); perm.push(t); }
            spans.push(SentenceSpan::new(start, perm.len()));
            sentence_map[old_s] = new_s;
        }
        let data: Vec<f64> = perm.iter().flat_map(|&t| p.embeddings.row(t).to_vec()).collect();
        let m = EmbeddingMatrix::new(n, p.embeddings.dim(), data).unwrap();
        let props = p.propositions.iter().map(|pm| {
            let mut t: Vec<usize> = pm.token_indices.iter().map(|&i| new_pos[i]).collect();
            t.sort_unstable();
            PropositionMask::new(sentence_map[pm.sentence_idx], t)
        }).collect();
        let shuffled = PassageRecord::new("p", m, spans, props).unwrap();

        prop_assert!((score_passage(&q, &p).unwrap() - score_passage(&q, &shuffled).unwrap()).abs() <= 1e-12);
        let qs = as_sentence(&q);
        for j in 0..p.sentences.len() {
            let a = score_sentence_in_passage(&qs, &p, j).unwrap();
            let b = score_sentence_in_passage(&qs, &shuffled, sentence_map[j]).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
        for k in 0..p.propositions.len() {
            let a = score_proposition(&q, &p, k).unwrap();
            let b = score_proposition(&q, &shuffled, k).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn sentence_ranking_is_sorted_and_complete(
        q in query(6, 4, QueryMarker::Passage),
        a in passage("a", 8, 4),
        b in passage("b", 8, 4),
    ) {
        let qs = as_sentence(&q);
        let cands = vec![a, b];
        let r = rank_sentences(&qs, &q, &cands, &RankingConfig::default()).unwrap();
        let expected: usize = cands.iter().map(|p| p.sentences.len()).sum();
        prop_assert_eq!(r.len(), expected);
        prop_assert!(r.windows(2).all(|w| w[0].score >= w[1].score));
        prop_assert!(r.iter().all(|u| matches!(u.unit, Unit::Sentence(_))));
        let again = rank_sentences(&qs, &q, &cands, &RankingConfig::default()).unwrap();
        prop_assert_eq!(r, again);
    }
}

#[test]
fn validation_is_idempotent() {
    let p = agrame_core::fixtures::fixture_a_passage();
    let mut broken = p.clone();
    broken.sentences[1] = SentenceSpan::new(1, 4);
    for rec in [p, broken] {
        let before = rec.clone();
        let v1 = agrame_core::validate_passage(&rec);
        let v2 = agrame_core::validate_passage(&rec);
        assert_eq!(v1, v2);
        assert_eq!(rec, before);
    }
}
