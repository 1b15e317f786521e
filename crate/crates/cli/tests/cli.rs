mod common;

use std::path::Path;

use common::*;
use cotmol_core::annotate::annotate_corpus;
use cotmol_core::bondgraph::{stationary, TransferGraph, TransitionMatrix};
use cotmol_core::synth::{synthesize_batch, SynthesisConfig};
use cotmol_core::trace::{read_corpus, DEFAULT_DELIMITERS};
use cotmol_core::Trace;
use cotmol_llm::{LlmClassifier, LlmGenerator};
use serde_json::Value;
use tempfile::tempdir;

fn segmented(dir: &Path) {
    write(dir, "raw.jsonl", &raw_corpus());
    ok(dir, &["segment", "--in", "raw.jsonl", "--out", "seg"]);
}

fn labeled(dir: &Path) {
    segmented(dir);
    record_annotation_log(&dir.join("seg/segmented.jsonl"), &dir.join("annot.log"));
    ok(dir, &["--replay", "annot.log", "annotate", "--in", "seg/segmented.jsonl", "--out", "lab"]);
}

#[test]
fn usage_errors_exit_two() {
    let d = tempdir().unwrap();
    let r = cotmol(d.path(), &["bogus"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("Usage"), "{}", r.stderr);
    assert_eq!(cotmol(d.path(), &["graph", "estimate"]).code, 2);
    assert_eq!(cotmol(d.path(), &["energy", "rope-mc", "--nope"]).code, 2);
    assert_eq!(cotmol(d.path(), &["energy", "rope-mc", "--rho", "weird"]).code, 2);
    assert_eq!(cotmol(d.path(), &["--help"]).code, 0);
    assert_eq!(cotmol(d.path(), &["--version"]).code, 0);
    // nothing was written by any failing invocation
    assert!(tree(d.path()).is_empty());
}

#[test]
fn segment_writes_steps_and_manifest() {
    let d = tempdir().unwrap();
    segmented(d.path());
    let text = std::fs::read_to_string(d.path().join("seg/segmented.jsonl")).unwrap();
    let rows: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        let steps = r["steps"].as_array().unwrap();
        assert!(steps.len() >= 6);
        assert!(steps.last().unwrap().as_str().unwrap().contains("boxed"));
    }
    let m = read_json(&d.path().join("seg/manifest.json"));
    assert_eq!(m["command"], "segment");
    assert_eq!(m["inputs"][0]["path"], "raw.jsonl");
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["outputs"][0], "segmented.jsonl");

    // a custom delimiter that never occurs keeps each trace whole
    ok(d.path(), &["segment", "--in", "raw.jsonl", "--delimiters", "@@", "--out", "whole.jsonl"]);
    let text = std::fs::read_to_string(d.path().join("whole.jsonl")).unwrap();
    assert!(text.lines().all(|l| serde_json::from_str::<Value>(l).unwrap()["steps"].as_array().unwrap().len() == 1));
}

#[test]
fn annotate_from_replay_matches_in_process_labels() {
    let d = tempdir().unwrap();
    labeled(d.path());
    let traces: Vec<Trace> = read_corpus(d.path().join("seg/segmented.jsonl"), &DEFAULT_DELIMITERS)
        .unwrap()
        .into_iter()
        .map(|e| e.trace)
        .collect();
    let direct = annotate_corpus(&traces, &LlmClassifier::new(mock_client(None, cue_verdict)), 1).unwrap();
    let got = read_corpus(d.path().join("lab/labeled.jsonl"), &DEFAULT_DELIMITERS).unwrap();
    for (lt, e) in direct.iter().zip(&got) {
        assert_eq!(Some(lt.labels().to_vec()), e.labels);
    }
    // no client was built, so nothing was audited
    let m = read_json(&d.path().join("lab/manifest.json"));
    assert!(m["client"].is_null());
    assert!(!d.path().join("lab/audit.jsonl").exists());

    // gold equal to the prediction scores 1
    ok(d.path(), &["--replay", "annot.log", "annotate", "--in", "seg/segmented.jsonl", "--gold", "lab/labeled.jsonl", "--out", "again"]);
    let a = read_json(&d.path().join("again/labeled.agreement.json"));
    assert_eq!(a["macro_f1"], 1.0);
}

#[test]
fn replay_miss_and_missing_model_fail_without_output() {
    let d = tempdir().unwrap();
    segmented(d.path());
    write(d.path(), "empty.log", "");
    let r = cotmol(d.path(), &["--replay", "empty.log", "annotate", "--in", "seg/segmented.jsonl", "--out", "x"]);
    assert_eq!(r.code, 1, "{}", r.stderr);
    assert!(r.stderr.contains("replay"), "{}", r.stderr);
    assert!(!d.path().join("x").exists());

    let r = cotmol(d.path(), &["annotate", "--in", "seg/segmented.jsonl", "--out", "y"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(!d.path().join("y").exists());

    write(d.path(), "bad.toml", "model = \"m\"\ncolour = 3\n");
    let r = cotmol(d.path(), &["--config", "bad.toml", "annotate", "--in", "seg/segmented.jsonl", "--out", "z"]);
    assert_ne!(r.code, 0);
    assert!(!d.path().join("z").exists());
}

#[test]
fn graph_estimate_schema_and_counts() {
    let d = tempdir().unwrap();
    labeled(d.path());
    ok(d.path(), &["graph", "estimate", "--in", "lab/labeled.jsonl", "--out", "g"]);
    let g = read_json(&d.path().join("g/transfer_graph.json"));
    let keys: Vec<&String> = g.as_object().unwrap().keys().collect();
    assert_eq!(keys, ["labels", "p", "counts", "pi"]);
    assert_eq!(g["labels"], serde_json::json!(["N", "D", "R", "E"]));

    let entries = read_corpus(d.path().join("lab/labeled.jsonl"), &DEFAULT_DELIMITERS).unwrap();
    let mut counts = [[0u64; 4]; 4];
    for e in &entries {
        for w in e.labels.as_ref().unwrap().windows(2) {
            counts[w[0].index()][w[1].index()] += 1;
        }
    }
    for i in 0..4 {
        let row: u64 = counts[i].iter().sum();
        let mut sum = 0.0;
        for j in 0..4 {
            assert_eq!(g["counts"][i][j].as_u64().unwrap(), counts[i][j]);
            let p = g["p"][i][j].as_f64().unwrap();
            if row > 0 {
                assert!((p - counts[i][j] as f64 / row as f64).abs() < 1e-11);
            }
            sum += p;
        }
        assert!((sum - 1.0).abs() < 1e-11);
    }

    ok(d.path(), &["--format", "csv", "graph", "estimate", "--in", "lab/labeled.jsonl", "--out", "g.csv"]);
    let csv = std::fs::read_to_string(d.path().join("g.csv")).unwrap();
    assert!(csv.starts_with("from,to,count,p\n"));
    assert_eq!(csv.lines().count(), 17);

    // a corpus against itself correlates perfectly
    ok(d.path(), &["graph", "compare", "--a", "g/transfer_graph.json", "--b", "lab/labeled.jsonl", "--out", "cmp.json"]);
    let c = read_json(&d.path().join("cmp.json"));
    assert!((c["pearson"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(c["marginal_tv"].as_f64().unwrap() < 1e-9);
}

#[test]
fn malformed_input_is_a_domain_error_with_no_output() {
    let d = tempdir().unwrap();
    write(d.path(), "bad.jsonl", "{\"id\":\"a\",\"query\":\"q\",\"steps\":[\"x\",\"y\"],\"labels\":[\"N\",\"D\"]}\n");
    let r = cotmol(d.path(), &["graph", "estimate", "--in", "bad.jsonl", "--out", "o"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("bad.jsonl"), "{}", r.stderr);
    let r = cotmol(d.path(), &["graph", "estimate", "--in", "missing.jsonl", "--out", "o"]);
    assert_eq!(r.code, 1);
    assert!(!d.path().join("o").exists());
    assert!(!d.path().join("cotmol-out").exists());
}

#[test]
fn rope_mc_is_reproducible_across_worker_counts() {
    let d = tempdir().unwrap();
    let args = |out: &'static str, jobs: &'static str| {
        vec!["--seed", "7", "--jobs", jobs, "energy", "rope-mc", "--n", "20000", "--out", out]
    };
    ok(d.path(), &args("a.json", "0"));
    ok(d.path(), &args("b.json", "0"));
    ok(d.path(), &args("c.json", "1"));
    let a = std::fs::read(d.path().join("a.json")).unwrap();
    assert_eq!(a, std::fs::read(d.path().join("b.json")).unwrap());
    assert_eq!(a, std::fs::read(d.path().join("c.json")).unwrap());
    let v = read_json(&d.path().join("a.json"));
    assert_eq!(v["report"]["estimates"].as_array().unwrap().len(), 3);

    ok(d.path(), &["--seed", "8", "energy", "rope-mc", "--n", "20000", "--out", "other.json"]);
    assert_ne!(a, std::fs::read(d.path().join("other.json")).unwrap());
}

#[test]
fn paths_csv_is_header_only_when_enumeration_is_skipped() {
    let d = tempdir().unwrap();
    std::fs::write(d.path().join("a.catt"), catt(1, 3, &[0.0; 9])).unwrap();
    write(d.path(), "spans.json", "[[0,1],[1,2],[2,3]]");
    ok(d.path(), &["energy", "paths", "--attention", "a.catt", "--spans", "spans.json", "--out", "p.json"]);
    let p = read_json(&d.path().join("p.json"));
    assert_eq!(p["path_count"], 2);
    assert!((p["e_star"].as_f64().unwrap() + 2f64.ln()).abs() < 1e-9);

    ok(d.path(), &["energy", "paths", "--attention", "a.catt", "--spans", "spans.json", "--limit", "1", "--out", "p.csv"]);
    assert_eq!(std::fs::read_to_string(d.path().join("p.csv")).unwrap(), "path,energy\n");
}

#[test]
fn phase_reports_undefined_slope_as_null() {
    let d = tempdir().unwrap();
    write(d.path(), "info.jsonl", "{\"trace_id\":\"a\",\"info\":[1.0,1.0,1.0,2.0]}\n");
    ok(d.path(), &["geometry", "phase", "--in", "info.jsonl", "--out", "ph.json"]);
    let v = read_json(&d.path().join("ph.json"));
    let slope = v[0]["trajectory"]["slope"].as_array().unwrap();
    assert!(slope[0].is_null());
    assert!(slope[1].is_null());
    assert!(slope[2].is_number());
    ok(d.path(), &["--format", "csv", "geometry", "phase", "--in", "info.jsonl", "--out", "ph"]);
    let csv = std::fs::read_to_string(d.path().join("ph/phase.csv")).unwrap();
    let second = csv.lines().nth(2).unwrap();
    assert_eq!(second.split(',').nth(5), Some(""));
}

#[test]
fn meb_of_square_corners() {
    let d = tempdir().unwrap();
    write(d.path(), "sq.jsonl", "{\"trace_id\":\"s\",\"vectors\":[[0,0],[1,0],[0,1],[1,1]]}\n");
    ok(d.path(), &["geometry", "meb", "--embeddings", "sq.jsonl", "--reduce", "none", "--out", "m.json"]);
    let text = std::fs::read_to_string(d.path().join("m.json")).unwrap();
    let half_diag = std::f64::consts::FRAC_1_SQRT_2;
    let v = read_json(&d.path().join("m.json"));
    let r = find_number(&v, "radius").unwrap();
    assert!((r - half_diag).abs() < 1e-9, "{text}");
    let vol = find_number(&v, "volume").unwrap();
    assert!((vol - std::f64::consts::PI * 0.5).abs() < 1e-9, "{text}");
}

fn find_number(v: &Value, key: &str) -> Option<f64> {
    match v {
        Value::Object(m) => m.get(key).and_then(Value::as_f64).or_else(|| m.values().find_map(|x| find_number(x, key))),
        Value::Array(a) => a.iter().find_map(|x| find_number(x, key)),
        _ => None,
    }
}

fn graph_json(p: [[f64; 4]; 4]) -> String {
    let m = TransitionMatrix::from_probabilities(p).unwrap();
    serde_json::to_string(&TransferGraph::new(&m, &stationary(&m).unwrap())).unwrap()
}

const TARGET: [[f64; 4]; 4] = [
    [0.1, 0.4, 0.3, 0.2],
    [0.05, 0.6, 0.25, 0.1],
    [0.2, 0.3, 0.3, 0.2],
    [0.1, 0.5, 0.1, 0.3],
];

fn directive_echo(prompt: &str) -> String {
    prompt.lines().find(|l| l.starts_with("You should conduct")).unwrap_or("").to_string()
}

#[test]
fn synth_replays_an_in_process_run() {
    let d = tempdir().unwrap();
    write(d.path(), "g.json", &graph_json(TARGET));
    let questions: Vec<String> = (0..5).map(|i| format!("question {i}")).collect();
    let qfile: String = questions.iter().map(|q| format!("{{\"question\":\"{q}\"}}\n")).collect();
    write(d.path(), "q.jsonl", &qfile);

    let m = TransitionMatrix::from_probabilities(TARGET).unwrap();
    let cfg = SynthesisConfig::new(m, 6, 42);
    let gen = LlmGenerator::new(mock_client(Some(&d.path().join("gen.log")), directive_echo));
    let direct = synthesize_batch(&questions, &cfg, &gen, 1).unwrap();

    ok(d.path(), &["--seed", "42", "--replay", "gen.log", "synth", "--graph", "g.json", "--questions", "q.jsonl", "--max-steps", "6", "--out", "s"]);
    let text = std::fs::read_to_string(d.path().join("s/synthetic.jsonl")).unwrap();
    let rows: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), direct.len());
    for (row, t) in rows.iter().zip(&direct) {
        let want = serde_json::to_value(t).unwrap();
        assert_eq!(row["steps"], want["steps"]);
        assert_eq!(row["question"], want["question"]);
    }

    // the replay subcommand checks the log itself
    ok(d.path(), &["replay", "gen.log", "--out", "rc.json"]);
    let rc = read_json(&d.path().join("rc.json"));
    assert_eq!(rc["entries"].as_u64().unwrap(), 30);
    assert_eq!(find_number(&rc, "key_mismatches"), Some(0.0));
}

#[test]
fn shift_between_two_graphs() {
    let d = tempdir().unwrap();
    // circulant rows, so the marginal is uniform
    let a = [
        [0.4, 0.3, 0.2, 0.1],
        [0.1, 0.4, 0.3, 0.2],
        [0.2, 0.1, 0.4, 0.3],
        [0.3, 0.2, 0.1, 0.4],
    ];
    let b = [
        [0.55, 0.15, 0.15, 0.15],
        [0.55, 0.15, 0.15, 0.15],
        [0.55, 0.15, 0.15, 0.15],
        [0.55, 0.15, 0.15, 0.15],
    ];
    write(d.path(), "a.json", &graph_json(a));
    write(d.path(), "b.json", &graph_json(b));
    ok(d.path(), &["transform", "shift", "--a", "a.json", "--b", "b.json", "--out", "s.json"]);
    let v = read_json(&d.path().join("s.json"));
    assert!((find_number(&v, "tv").unwrap() - 0.3).abs() < 1e-9);

    // a flat matrix has no correlation to report
    write(d.path(), "flat.json", &graph_json([[0.25; 4]; 4]));
    let r = cotmol(d.path(), &["transform", "shift", "--a", "flat.json", "--b", "b.json", "--out", "f.json"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("variance"), "{}", r.stderr);
}

#[test]
fn ergodic_mean_is_within_bound() {
    let d = tempdir().unwrap();
    write(d.path(), "g.json", &graph_json(TARGET));
    ok(d.path(), &["--seed", "3", "energy", "ergodic", "--graph", "g.json", "--mu", "1,0.5,0.8,1.4", "--steps", "50000", "--out", "e.json"]);
    let v = read_json(&d.path().join("e.json"));
    assert_eq!(v["ergodic"]["within_bound"], true);
    let r = cotmol(d.path(), &["energy", "ergodic", "--graph", "g.json", "--mu", "1,2", "--out", "bad.json"]);
    assert_eq!(r.code, 2);
}

#[test]
fn keyword_removal_is_idempotent_through_the_cli() {
    let d = tempdir().unwrap();
    write(
        d.path(),
        "c.jsonl",
        "{\"id\":\"a\",\"query\":\"q\",\"steps\":[\"Wait, maybe x is 2.\",\"Alternatively, let's check y.\",\"So it is 4.\"]}\n",
    );
    ok(d.path(), &["transform", "keywords", "--in", "c.jsonl", "--plan", "removal", "--out", "r1.jsonl"]);
    ok(d.path(), &["transform", "keywords", "--in", "r1.jsonl", "--plan", "removal", "--out", "r2.jsonl"]);
    let r1 = std::fs::read(d.path().join("r1.jsonl")).unwrap();
    assert_eq!(r1, std::fs::read(d.path().join("r2.jsonl")).unwrap());
    assert!(!String::from_utf8(r1).unwrap().contains("Wait"));
    assert_eq!(cotmol(d.path(), &["transform", "keywords", "--in", "c.jsonl", "--plan", "plan9"]).code, 2);
}
