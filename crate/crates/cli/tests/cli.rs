use std::path::Path;
use std::process::{Command, Output};

use paperscope_core::bootstrap;
use paperscope_core::embedding::Provenance;
use paperscope_core::library::exact_similar;
use serde_json::Value;

fn paperscope(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_paperscope"))
        .arg("--data-dir")
        .arg(dir)
        .args(args)
        .env_remove("PAPERSCOPE_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json stdout")
}

fn hit_ids(v: &Value) -> Vec<String> {
    v["hits"].as_array().unwrap().iter().map(|h| h["paper_id"].as_str().unwrap().to_string()).collect()
}

fn exact_ids(dir: &Path, seed: &str, k: usize) -> Vec<String> {
    let (corpus, _) = bootstrap::read_corpus(&dir.join("corpus.jsonl")).unwrap();
    let (vectors, _) =
        bootstrap::read_vectors(&dir.join("embeddings/mock.jsonl"), "mock", Provenance::Mock, &corpus).unwrap();
    exact_similar(&vectors, seed, k).unwrap().into_iter().map(|h| h.paper_id).collect()
}

#[test]
fn sample_is_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [a.path(), b.path()] {
        let out = paperscope(d, &["sample", "--n", "200", "--seed", "7"]);
        assert!(out.status.success());
    }
    for f in ["corpus.jsonl", "embeddings/mock.jsonl"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    assert_eq!(std::fs::read_to_string(a.path().join("corpus.jsonl")).unwrap().lines().count(), 200);
}

#[test]
fn search_matches_exact_oracle() {
    let d = tempfile::tempdir().unwrap();
    assert!(paperscope(d.path(), &["sample", "--n", "200", "--seed", "7"]).status.success());
    let v = json_of(&paperscope(d.path(), &["--json", "search", "--space", "mock", "--seed-id", "p1", "--k", "5"]));
    assert_eq!(hit_ids(&v), exact_ids(d.path(), "p1", 5));
    assert_eq!(hit_ids(&v).len(), 5);
}

#[test]
fn index_then_approximate_search_matches_exact() {
    let d = tempfile::tempdir().unwrap();
    assert!(paperscope(d.path(), &["sample", "--n", "200", "--seed", "7"]).status.success());
    let idx = json_of(&paperscope(d.path(), &["--json", "index", "--space", "mock"]));
    assert_eq!(idx["nodes"], 200);
    assert!(d.path().join("index/mock.ann.json").exists());
    for seed in ["p1", "p17", "p200"] {
        let v = json_of(&paperscope(d.path(), &["--json", "search", "--space", "mock", "--seed-id", seed, "--k", "10"]));
        let mut got = hit_ids(&v);
        let mut want = exact_ids(d.path(), seed, 10);
        got.sort();
        want.sort();
        assert_eq!(got, want, "seed {seed}");
    }
}

#[test]
fn ingest_embed_and_chat() {
    let d = tempfile::tempdir().unwrap();
    let src = d.path().join("in.jsonl");
    std::fs::write(
        &src,
        "{\"id\":\"a\",\"title\":\"Maps of Rivers\",\"abstract\":\"Geographic maps.\"}\n\
         {\"id\":\"b\",\"title\":\"Charts of Stocks\"}\n\
         not json\n",
    )
    .unwrap();
    let v = json_of(&paperscope(d.path(), &["--json", "ingest", src.to_str().unwrap()]));
    assert_eq!((v["accepted"].as_u64(), v["total"].as_u64()), (Some(2), Some(2)));
    assert_eq!(v["rejected"].as_array().unwrap().len(), 1);
    let v = json_of(&paperscope(d.path(), &["--json", "embed", "--space", "mock"]));
    assert_eq!(v["vectors"], 2);

    let v = json_of(&paperscope(d.path(), &["--json", "chat", "--session", "s", "--message", "maps?", "--mock-llm"]));
    assert_eq!(v["llm_calls"], 1);
    let v = json_of(&paperscope(d.path(), &["--json", "chat", "--session", "s", "--message", "more", "--mock-llm"]));
    assert_eq!(v["llm_calls"], 2);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(paperscope(d.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(paperscope(d.path(), &["search", "--bogus"]).status.code(), Some(1));
    assert_eq!(paperscope(d.path(), &["sample", "--n", "0"]).status.code(), Some(1));
    assert!(!d.path().join("corpus.jsonl").exists(), "rejected commands leave no files");
    // No corpus yet.
    let out = paperscope(d.path(), &["search", "--seed-id", "p1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(paperscope(d.path(), &["sample", "--n", "20"]).status.success());
    assert_eq!(paperscope(d.path(), &["search", "--seed-id", "nope"]).status.code(), Some(1));
    assert_eq!(paperscope(d.path(), &["--help"]).status.code(), Some(0));
}
