use std::path::PathBuf;

use serde_json::Value;
use tikzgym::backends::Backends;
use tikzgym::config::RendererKind;
use tikzgym::corpus::read_corpus;
use tikzgym::pipeline::run_pipeline;
use tikzgym::render::renderer_from_config;
use tikzgym::Config;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mini").join(name)
}

fn sketch_config() -> Config {
    let mut cfg = Config::default();
    cfg.sandbox.renderer = RendererKind::Sketch;
    cfg
}

fn run() -> (String, Vec<tikzgym::corpus::SampleRecord>) {
    let cfg = sketch_config();
    let renderer = renderer_from_config(&cfg).unwrap();
    let out = run_pipeline(read_corpus(&data("corpus.jsonl")).unwrap(), &cfg, renderer.as_ref(), &Backends::builtin()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.write(dir.path()).unwrap();
    (std::fs::read_to_string(dir.path().join("manifest.json")).unwrap(), out.records)
}

#[test]
fn corpus_has_the_required_fault_mix() {
    let recs = read_corpus(&data("corpus.jsonl")).unwrap();
    assert_eq!(recs.len(), 20);
    let fragments = recs.iter().filter(|r| !r.code.contains("\\documentclass")).count();
    let layers = recs.iter().filter(|r| r.code.contains("pgfonlayer") && !r.code.contains("backgrounds")).count();
    assert!(fragments >= 2 && layers >= 2);
    assert!(recs.iter().any(|r| r.code.contains("\\IfFileExists")));
    assert!(recs.iter().all(|r| r.judge.is_some()));
}

#[test]
fn outcomes_match_expectations() {
    let expected: Value = serde_json::from_str(&std::fs::read_to_string(data("expected.json")).unwrap()).unwrap();
    let (manifest, records) = run();
    for r in &records {
        let e = &expected["records"][&r.id];
        assert_eq!(serde_json::to_value(r.status).unwrap(), e["status"], "{}", r.id);
        assert_eq!(r.reject_reason.as_deref(), e["reject_reason"].as_str(), "{}", r.id);
    }
    let m: Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["wrapped_fragments"], expected["wrapped_fragments"]);
    for note in m["repaired"].as_array().unwrap() {
        let max = &expected["repaired_max_rounds"][note["id"].as_str().unwrap()];
        assert!(note["rounds"].as_u64().unwrap() <= max.as_u64().unwrap());
    }
    assert_eq!(m["repaired"].as_array().unwrap().len(), 2);
}

#[test]
fn manifest_matches_golden_and_is_stable() {
    let (first, _) = run();
    let (second, _) = run();
    assert_eq!(first, second);
    let golden = std::fs::read_to_string(data("golden_manifest.sketch.json")).unwrap();
    assert_eq!(first, golden, "regenerate with `tikzgym --renderer sketch --out DIR curate --input data/mini/corpus.jsonl`");
}
