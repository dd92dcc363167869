mod common;

use std::fs;
use std::path::Path;

use agrame::formats::{CitedAnswer, PassageInput, RankRecord};
use agrame::storage::{write_passage_index, write_query_index};
use agrame_core::fixtures::{fixture_a_passage, fixture_a_query};
use agrame_core::{EmbeddingMatrix, PassageRecord, QueryEncoding, QueryMarker};
use common::{ok, run};

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

fn units(text: &str) -> Vec<RankRecord> {
    text.lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v["record"] == "unit")
        .map(|v| serde_json::from_value(v).unwrap())
        .collect()
}

fn fixture_a_files(dir: &Path) {
    let p = fixture_a_passage()
        .with_text("A")
        .with_sentence_texts(vec!["first".into(), "second".into()])
        .unwrap();
    write_passage_index(&dir.join("a.agrv"), &[p]).unwrap();
    let q = vec![fixture_a_query(QueryMarker::Passage), fixture_a_query(QueryMarker::Sentence)];
    write_query_index(&dir.join("q.agrv"), &q).unwrap();
}

#[test]
fn toy_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth-corpus", "--queries", "8", "--out", "s"]);
    let train = ["train-toy", "--corpus", "s.corpus.jsonl", "--epochs", "3", "--seed", "4", "--out"];
    ok(d, &[&train[..], &["m1"]].concat());
    ok(d, &[&train[..], &["m2"]].concat());
    let csv = read(d, "m1.metrics.csv");
    assert_eq!(csv, read(d, "m2.metrics.csv"));
    assert_eq!(fs::read(d.join("m1.agre")).unwrap(), fs::read(d.join("m2.agre")).unwrap());
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(csv.starts_with("epoch,l_psg,l_sent,total,sentence_agreement,passage_agreement\n"));
    let rc: serde_json::Value = serde_json::from_str(&read(d, "m1.run.json")).unwrap();
    assert_eq!(rc["args"]["seed"], 4);
    assert_eq!(rc["args"]["marker_mode"], "A1");

    ok(d, &["train-toy", "--corpus", "s.corpus.jsonl", "--epochs", "0", "--out", "z"]);
    let z = read(d, "z.metrics.csv");
    assert_eq!(z.lines().count(), 2);
    assert!(z.lines().nth(1).unwrap().starts_with("0,"));

    ok(d, &["index", "--passages", "s.passages.jsonl", "--toy-encoder", "m1.agre", "--out", "p"]);
    ok(d, &["index", "--queries", "s.queries.jsonl", "--toy-encoder", "m1.agre", "--out", "q"]);
    let rank = |out: &str| {
        ok(d, &[
            "rank", "--index", "p.agrv", "--queries", "q.agrv", "--level", "sentence", "--candidates",
            "s.candidates.jsonl", "--top-k", "5", "--breakdown", "--out", out,
        ]);
        read(d, out)
    };
    let r1 = rank("r1.jsonl");
    assert_eq!(r1, rank("r2.jsonl"));
    let u = units(&r1);
    assert_eq!(u.len(), 8 * 5);
    assert!(u.iter().all(|r| r.text.is_some() && r.level == "sentence"));
    assert_eq!(r1.lines().count(), 2 * u.len());

    let out = ok(d, &["eval", "--rankings", "r1.jsonl", "--qrels", "s.qrels.tsv", "--report", "e.csv"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("P@1"));
    assert!(read(d, "e.csv").starts_with("source,level,queries,p_at_1,r_at_5\nr1.jsonl,sentence,8,"));
}

#[test]
fn index_from_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let emb = vec![PassageRecord::single_sentence("x", EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap())];
    write_passage_index(&d.join("emb.agrv"), &emb).unwrap();
    let input = PassageInput {
        id: "x".into(),
        text: Some("two words".into()),
        tokens: None,
        sentences: vec![[0, 1], [1, 2]],
        propositions: vec![],
        sentence_texts: vec![],
    };
    fs::write(d.join("p.jsonl"), agrame::formats::to_jsonl(&[input])).unwrap();
    let out = ok(d, &["index", "--passages", "p.jsonl", "--embeddings", "emb.agrv", "--out", "idx"]);
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        "wrote idx.agrv: kind=passages version=1 dim=2 records=1"
    );
    let back = agrame::storage::read_passage_index(&d.join("idx.agrv")).unwrap();
    assert_eq!(back[0].sentences.len(), 2);
    assert!(d.join("idx.run.json").exists());

    fs::write(d.join("bad.agrv"), b"XXXXnot an index").unwrap();
    let out = run(d, &["index", "--passages", "p.jsonl", "--embeddings", "bad.agrv", "--out", "y"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not an AGRV file"));

    // query encodings of another dim cannot rank this index
    let q3 = EmbeddingMatrix::from_rows(&[[1.0, 0.0, 0.0]]).unwrap();
    write_query_index(&d.join("q3.agrv"), &[QueryEncoding::new("q", QueryMarker::Passage, q3)]).unwrap();
    let out = run(d, &["rank", "--index", "idx.agrv", "--queries", "q3.agrv", "--out", "r.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dim mismatch"));
}

#[test]
fn fixture_a_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture_a_files(d);
    ok(d, &["rank", "--index", "a.agrv", "--queries", "q.agrv", "--level", "passage", "--out", "p.jsonl"]);
    let p = units(&read(d, "p.jsonl"));
    assert_eq!(p.len(), 1);
    assert_eq!((p[0].passage_id.as_str(), p[0].unit_index), ("A", None));
    // 0.6 and 0.8 are stored as f32
    assert!((p[0].score - 2.0).abs() < 1e-6);

    ok(d, &["rank", "--index", "a.agrv", "--queries", "q.agrv", "--level", "sentence", "--alpha", "0.5", "--out", "s.jsonl"]);
    let s = units(&read(d, "s.jsonl"));
    assert_eq!(s.len(), 2);
    for u in &s {
        assert!((u.score - 2.8).abs() < 1e-6, "{u:?}");
    }
    // equal scores keep sentence order
    assert_eq!((s[0].unit_index, s[1].unit_index), (Some(0), Some(1)));
    assert_eq!(s[0].text.as_deref(), Some("first"));

    ok(d, &["rank", "--index", "a.agrv", "--queries", "q.agrv", "--top-k", "0", "--out", "e.jsonl"]);
    assert_eq!(read(d, "e.jsonl"), "");
}

#[test]
fn citation_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth-cite", "--queries", "40", "--out", "c"]);
    let cite = |variant: &str, margin: &str, out: &str| {
        ok(d, &[
            "cite", "--answers", "c.answers.jsonl", "--encodings", "c.answer-enc.agrv", "--contexts",
            "c.contexts.agrv", "--context-map", "c.context-map.jsonl", "--variant", variant, "--margin", margin, "--out", out,
        ]);
        read(d, out)
            .lines()
            .map(|l| serde_json::from_str::<CitedAnswer>(l).unwrap())
            .collect::<Vec<_>>()
    };
    let lo = cite("propcite", "0", "lo.jsonl");
    let hi = cite("propcite", "1", "hi.jsonl");
    let top2 = cite("sentence_top2", "0", "t2.jsonl");
    assert_eq!(lo.len(), 40);
    for ((a, b), t) in lo.iter().zip(&hi).zip(&top2) {
        for ((sa, sb), st) in a.sentences.iter().zip(&b.sentences).zip(&t.sentences) {
            // union of proposition choices, shrinking with the margin
            let mut u: Vec<usize> = sa.propositions.iter().filter_map(|p| p.chosen).collect();
            u.sort_unstable();
            u.dedup();
            assert_eq!(sa.cited, u);
            assert!(sb.cited.iter().all(|c| sa.cited.contains(c)));
            assert_eq!(st.cited.len(), 2);
            let marks: String = st.cited.iter().map(|c| format!("[{}]", c + 1)).collect();
            assert!(st.rendered.ends_with(&format!(" {marks}.")), "{}", st.rendered);
        }
    }
    assert!(hi.iter().flat_map(|a| &a.sentences).any(|s| s.propositions.iter().any(|p| p.chosen.is_none())));

    ok(d, &["eval", "--citations", "lo.jsonl", "hi.jsonl", "--contexts", "c.contexts.agrv", "--report", "ce.csv"]);
    let report = read(d, "ce.csv");
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "source,variant,margin,sentences,citations,precision,recall,precision_defined,single_citation_share"
    );
    let row = |l: &str| -> (f64, f64) {
        let f: Vec<&str> = l.split(',').collect();
        (f[5].parse().unwrap(), f[6].parse().unwrap())
    };
    let (p0, r0) = row(lines.next().unwrap());
    let (p1, r1) = row(lines.next().unwrap());
    assert!(p1 >= p0 && r1 <= r0, "{report}");
}

#[test]
fn sentences_without_propositions_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fixture_a_files(d);
    let enc = vec![QueryEncoding::new("q/0", QueryMarker::Passage, EmbeddingMatrix::from_rows(&[[1.0, 0.0]]).unwrap())];
    write_query_index(&d.join("enc.agrv"), &enc).unwrap();
    fs::write(d.join("ans.jsonl"), "{\"query_id\":\"q\",\"sentences\":[{\"text\":\"Bare.\",\"propositions\":[]}]}\n").unwrap();
    fs::write(d.join("map.jsonl"), "{\"query_id\":\"q\",\"passages\":[\"A\"]}\n").unwrap();
    let out = ok(d, &[
        "cite", "--answers", "ans.jsonl", "--encodings", "enc.agrv", "--contexts", "a.agrv", "--context-map", "map.jsonl",
        "--out", "o.jsonl",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("q sentence 0 has no propositions"));
    let c: CitedAnswer = serde_json::from_str(read(d, "o.jsonl").trim()).unwrap();
    assert!(c.sentences[0].no_propositions && c.sentences[0].cited.is_empty());
    assert_eq!(c.rendered, "Bare.");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(run(d, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(d, &["rank", "--index", "nope.agrv", "--queries", "nope.agrv", "--out", "x"]).status.code(), Some(2));
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));

    fixture_a_files(d);
    fs::write(d.join("junk.jsonl"), "{not json\n").unwrap();
    let out = run(d, &[
        "cite", "--answers", "junk.jsonl", "--encodings", "q.agrv", "--contexts", "a.agrv", "--context-map", "junk.jsonl",
        "--out", "o.jsonl",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("junk.jsonl:1"));

    let threads = |v: &str| {
        std::process::Command::new(common::bin())
            .args(["rank", "--index", "a.agrv", "--queries", "q.agrv", "--out", "t.jsonl"])
            .current_dir(d)
            .env("AGRAME_THREADS", v)
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(threads("0"), Some(2));
    assert_eq!(threads("many"), Some(2));
    assert_eq!(threads("2"), Some(0));
}
