use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn evinduce(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evinduce"))
        .args(args)
        .env_remove("EVINDUCE_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = evinduce(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

/// Small synthetic corpus; returns its output directory.
fn synth(tmp: &TempDir, name: &str, seed: &str) -> PathBuf {
    let out = tmp.path().join(name);
    ok(&[
        "synth",
        "--seed",
        seed,
        "--docs",
        "6",
        "--sentences",
        "2",
        "--predicates",
        "1",
        "--arguments",
        "2",
        "--out",
        p(&out),
    ]);
    out
}

fn fit(tmp: &TempDir, corpus: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = tmp.path().join(name);
    let mut args = vec![
        "fit",
        "--train",
        p(corpus),
        "--types",
        "2,2,2,2",
        "--max-iters",
        "2",
        "--restarts",
        "1",
        "--m-steps",
        "20",
        "--out",
        p(&out),
    ];
    args.extend_from_slice(extra);
    ok(&args);
    out
}

#[test]
fn no_arguments_is_a_usage_error() {
    assert_eq!(evinduce(&[]).status.code(), Some(2));
    assert_eq!(evinduce(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        evinduce(&["fit", "--train", "x.jsonl"]).status.code(),
        Some(2)
    );
}

#[test]
fn unreadable_or_malformed_input_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("o");
    let r = evinduce(&[
        "ingest",
        "--corpus",
        "/nonexistent/corpus.jsonl",
        "--out",
        p(&out),
    ]);
    assert_eq!(r.status.code(), Some(3));

    let bad = tmp.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": \"d1\"}\nnot json\n").unwrap();
    let r = evinduce(&["ingest", "--corpus", p(&bad), "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&r.stderr).is_empty());
}

#[test]
fn synth_is_deterministic_under_a_seed() {
    let tmp = TempDir::new().unwrap();
    let a = manifest(&synth(&tmp, "a", "9"));
    let b = manifest(&synth(&tmp, "b", "9"));
    let c = manifest(&synth(&tmp, "c", "10"));
    assert_eq!(a["outputs"], b["outputs"]);
    assert_ne!(a["outputs"]["corpus.jsonl"], c["outputs"]["corpus.jsonl"]);
    assert_eq!(a["seed"], 9);
    assert_eq!(a["subcommand"], "synth");
}

#[test]
fn ingest_round_trips_a_synthetic_corpus() {
    let tmp = TempDir::new().unwrap();
    let s = synth(&tmp, "s", "1");
    let out = tmp.path().join("ingest");
    ok(&[
        "ingest",
        "--corpus",
        p(&s.join("corpus.jsonl")),
        "--out",
        p(&out),
    ]);
    assert_eq!(
        std::fs::read_to_string(s.join("corpus.jsonl")).unwrap(),
        std::fs::read_to_string(out.join("corpus.jsonl")).unwrap()
    );
    assert!(out.join("stats.tsv").exists());
}

#[test]
fn posterior_rows_match_truth_rows() {
    let tmp = TempDir::new().unwrap();
    let s = synth(&tmp, "s", "2");
    let corpus = s.join("corpus.jsonl");
    let f = fit(&tmp, &corpus, "fit", &[]);
    assert!(f.join("checkpoint.json").exists());
    assert_eq!(rows(&f.join("trace.tsv")), 2);

    let out = tmp.path().join("post");
    ok(&[
        "posteriors",
        "--checkpoint",
        p(&f.join("checkpoint.json")),
        "--corpus",
        p(&corpus),
        "--out",
        p(&out),
    ]);
    let post = out.join("posteriors.tsv");
    assert_eq!(rows(&post), rows(&s.join("truth.tsv")));
    assert_eq!(
        std::fs::read_to_string(&post).unwrap(),
        std::fs::read_to_string(f.join("posteriors.tsv")).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = TempDir::new().unwrap();
    let s = synth(&tmp, "s", "3");
    let corpus = s.join("corpus.jsonl");
    let one = fit(&tmp, &corpus, "one", &["--threads", "1"]);
    let two = fit(&tmp, &corpus, "two", &["--threads", "2"]);
    assert_eq!(manifest(&one)["outputs"], manifest(&two)["outputs"]);
}

#[test]
fn flags_override_config_file_which_overrides_defaults() {
    let tmp = TempDir::new().unwrap();
    let s = synth(&tmp, "s", "4");
    let corpus = s.join("corpus.jsonl");
    let cfg = tmp.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"fit": {"seed": 77, "window": 3, "m_steps": 5}}"#).unwrap();

    let from_file = fit(&tmp, &corpus, "file", &["--config", p(&cfg)]);
    let m = manifest(&from_file);
    assert_eq!(m["config"]["seed"], 77);
    assert_eq!(m["config"]["window"], 3);
    // the explicit --m-steps flag in `fit` wins over the file
    assert_eq!(m["config"]["m_steps"], 20);
    assert!(m["inputs"].as_object().unwrap().contains_key(p(&cfg)));

    let flagged = fit(&tmp, &corpus, "flag", &["--config", p(&cfg), "--seed", "5"]);
    let m = manifest(&flagged);
    assert_eq!(m["config"]["seed"], 5);
    assert_eq!(m["seed"], 5);
    assert_eq!(m["config"]["window"], 3);

    let out = tmp.path().join("env");
    let r = Command::new(env!("CARGO_BIN_EXE_evinduce"))
        .args([
            "fit",
            "--train",
            p(&corpus),
            "--types",
            "2,2,2,2",
            "--max-iters",
            "1",
            "--restarts",
            "1",
        ])
        .args(["--out", p(&out)])
        .env("EVINDUCE_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(r.status.success());
    assert_eq!(manifest(&out)["config"]["seed"], 77);

    std::fs::write(&cfg, r#"{"fit": {"seed": 1}, "typo": {}}"#).unwrap();
    let r = evinduce(&[
        "fit",
        "--train",
        p(&corpus),
        "--types",
        "2,2,2,2",
        "--config",
        p(&cfg),
        "--out",
        p(&out),
    ]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn downstream_analyses_run_on_a_fit() {
    let tmp = TempDir::new().unwrap();
    let s = synth(&tmp, "s", "5");
    let corpus = s.join("corpus.jsonl");
    let a = fit(&tmp, &corpus, "a", &["--seed", "1"]);
    let b = fit(&tmp, &corpus, "b", &["--seed", "2"]);

    let out = tmp.path().join("summary");
    ok(&[
        "summarize",
        "--checkpoint",
        p(&a.join("checkpoint.json")),
        "--long",
        "--out",
        p(&out),
    ]);
    for c in ["event", "entity", "role", "relation"] {
        assert!(out.join(format!("summary_{c}.tsv")).exists(), "{c}");
    }
    assert!(out.join("summary_long.tsv").exists());

    let out = tmp.path().join("cmp");
    ok(&[
        "compare-fits",
        "--a",
        p(&a.join("posteriors.tsv")),
        "--b",
        p(&b.join("posteriors.tsv")),
        "--classification",
        "role",
        "--out",
        p(&out),
    ]);
    let conf = std::fs::read_to_string(out.join("confusion_role.tsv")).unwrap();
    for line in conf.lines().skip(1) {
        let total: f64 = line
            .split('\t')
            .skip(1)
            .map(|x| x.parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "{line}");
    }

    let out = tmp.path().join("entropy");
    ok(&[
        "entropy",
        "--posteriors",
        p(&a.join("posteriors.tsv")),
        "--out",
        p(&out),
    ]);
    let ent = std::fs::read_to_string(out.join("entropy.tsv")).unwrap();
    assert!(ent.starts_with("classification\telements\tmean\tmedian\n"));
    assert_eq!(ent.lines().count(), 5);

    let out = tmp.path().join("features");
    ok(&[
        "export-features",
        "--corpus",
        p(&corpus),
        "--posteriors",
        p(&a.join("posteriors.tsv")),
        "--out",
        p(&out),
    ]);
    // two arguments per predicate
    assert_eq!(
        rows(&out.join("arguments.tsv")),
        2 * rows(&out.join("predicates.tsv"))
    );
}

#[test]
fn agreement_from_a_table_and_from_a_corpus() {
    let tmp = TempDir::new().unwrap();
    let table = tmp.path().join("rel.tsv");
    std::fs::write(
        &table,
        "item\tannotator\tvalue\tconfidence\n\
         1\tx\t0\t0.9\n1\ty\t0\t0.8\n1\tz\t0\t0.7\n2\tx\t1\t0.9\n2\ty\t1\t0.2\n2\tz\t1\t0.6\n\
         3\tx\t0\t0.5\n3\ty\t1\t0.5\n",
    )
    .unwrap();
    let out = tmp.path().join("a");
    ok(&[
        "agreement",
        "--table",
        p(&table),
        "--thresholds",
        "0,0.6",
        "--bootstrap",
        "1000",
        "--panel",
        "x,y",
        "--out",
        p(&out),
    ]);
    let alpha = std::fs::read_to_string(out.join("alpha.tsv")).unwrap();
    let fields: Vec<&str> = alpha.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(fields[0], "nominal");
    assert_eq!(fields[1], "3");
    // D_o = 2/8, D_e = 2 * 4 * 4 / (8 * 7)
    let a: f64 = fields[2].parse().unwrap();
    assert!((a - 9.0 / 16.0).abs() < 1e-6, "{a}");
    assert_eq!(rows(&out.join("curve.tsv")), 2);
    assert_eq!(rows(&out.join("panel.tsv")), 1);

    let s = synth(&tmp, "s", "6");
    let out = tmp.path().join("b");
    ok(&[
        "agreement",
        "--corpus",
        p(&s.join("corpus.jsonl")),
        "--property",
        "telic",
        "--bootstrap",
        "1000",
        "--out",
        p(&out),
    ]);
    assert_eq!(rows(&out.join("alpha.tsv")), 1);

    let r = evinduce(&["agreement", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn checked_in_example_ingests_against_its_schema() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("ingest");
    ok(&[
        "ingest",
        "--corpus",
        p(&data.join("sample.jsonl")),
        "--schema",
        p(&data.join("schema.json")),
        "--out",
        p(&out),
    ]);
    let schema = evinduce::corpus::Schema::load(data.join("schema.json")).unwrap();
    assert_eq!(schema, evinduce::synth::default_schema());
    assert_eq!(
        std::fs::read_to_string(data.join("sample.jsonl")).unwrap(),
        std::fs::read_to_string(out.join("corpus.jsonl")).unwrap()
    );
}
