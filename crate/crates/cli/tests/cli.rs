//! End-to-end behaviour of the `dsilab` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/toy100")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn dsilab(work: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsilab"))
        .arg("--work")
        .arg(work)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(work: &Path, args: &[&str]) {
    let out = dsilab(work, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Contents of every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn prepare(work: &Path) {
    ok(work, &["ingest", "--corpus", &fixture("corpus.jsonl")]);
    ok(work, &["index", "dense"]);
    ok(work, &["build-data", "--mode", "multi", "--topics", &fixture("train_topics.tsv"), "--qrels", &fixture("train_qrels.txt")]);
    ok(work, &["train", "--epochs", "2"]);
}

#[test]
fn smoke_pipeline() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    prepare(w);
    ok(w, &["index", "bm25"]);
    ok(w, &["export-run", "--system", "student", "--topics", &fixture("test_topics.tsv")]);
    ok(w, &["export-run", "--system", "bm25", "--topics", &fixture("test_topics.tsv")]);
    let run = w.join("runs/student-retrieve/run.trec");
    let bm25_run = w.join("runs/bm25/run.trec");
    ok(
        w,
        &["evaluate", "--run", run.to_str().unwrap(), "--qrels", &fixture("test_qrels.txt"), "--compare", bm25_run.to_str().unwrap()],
    );
    ok(w, &["probe", "exclusivity", "--system", "bm25"]);
    ok(w, &["probe", "completeness", "--system", "bm25", "--topics", &fixture("test_topics.tsv"), "--qrels", &fixture("test_qrels.txt")]);

    let metrics = fs::read_to_string(w.join("eval/student-retrieve/metrics.tsv")).unwrap();
    assert!(metrics.starts_with("metric\tmean\tqueries\tunjudged\n"));
    assert_eq!(metrics.lines().count(), 5);
    let ttest = fs::read_to_string(w.join("eval/student-retrieve/ttest.tsv")).unwrap();
    assert_eq!(ttest.lines().count(), 5);
    let run_lines = fs::read_to_string(&run).unwrap();
    assert_eq!(run_lines.lines().count(), 50 * 10);
    for dir in ["corpus", "index/dense", "index/bm25", "data", "model", "runs/student-retrieve", "eval/student-retrieve"] {
        assert!(w.join(dir).join("manifest.json").exists(), "{dir} manifest");
    }
    assert!(start.elapsed() < Duration::from_secs(300));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dsilab(dir.path(), &["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn missing_artifact_exits_3_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dsilab(dir.path(), &["index", "bm25"]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("corpus"), "{stderr}");

    ok(dir.path(), &["ingest", "--corpus", &fixture("corpus.jsonl")]);
    let out = dsilab(dir.path(), &["train"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data"));
}

#[test]
fn ros_probe_writes_one_row_per_position() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    ok(w, &["ingest", "--corpus", &fixture("corpus.jsonl")]);
    ok(w, &["index", "bm25"]);
    ok(w, &["probe", "ros", "--system", "bm25", "--topics", &fixture("test_topics.tsv")]);
    let found: Vec<PathBuf> = snapshot(&w.join("probes"))
        .into_keys()
        .filter(|p| p.file_name().is_some_and(|n| n == "ros.tsv"))
        .collect();
    assert_eq!(found.len(), 1);
    let tsv = fs::read_to_string(w.join("probes").join(&found[0])).unwrap();
    let rows: Vec<&str> = tsv.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    for (i, row) in rows.iter().enumerate() {
        let fields: Vec<&str> = row.split('\t').collect();
        assert_eq!(fields[0], (i + 1).to_string());
        let v: f64 = fields[1].parse().unwrap();
        assert!((0.0..=10.0).contains(&v));
    }
}

#[test]
fn retraining_reproduces_checkpoint_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    prepare(w);
    let first = snapshot(&w.join("model"));
    ok(w, &["train", "--epochs", "2"]);
    assert_eq!(first, snapshot(&w.join("model")));
    assert!(first.contains_key(Path::new("model.ckpt")));
}

#[test]
fn commands_leave_their_inputs_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    let inputs = tempfile::tempdir().unwrap();
    for f in ["corpus.jsonl", "train_topics.tsv", "train_qrels.txt"] {
        fs::copy(fixture(f), inputs.path().join(f)).unwrap();
    }
    let input = |f: &str| inputs.path().join(f).to_string_lossy().into_owned();
    let before_inputs = snapshot(inputs.path());
    ok(w, &["ingest", "--corpus", &input("corpus.jsonl")]);
    ok(w, &["index", "dense"]);
    let corpus = snapshot(&w.join("corpus"));
    let index = snapshot(&w.join("index"));
    ok(w, &["build-data", "--mode", "distill", "--topics", &input("train_topics.tsv"), "--qrels", &input("train_qrels.txt")]);
    let data = snapshot(&w.join("data"));
    ok(w, &["train", "--epochs", "1"]);
    ok(w, &["export-run", "--system", "student", "--topics", &input("train_topics.tsv")]);
    assert_eq!(before_inputs, snapshot(inputs.path()));
    assert_eq!(corpus, snapshot(&w.join("corpus")));
    assert_eq!(index, snapshot(&w.join("index")));
    assert_eq!(data, snapshot(&w.join("data")));
}

#[test]
fn flags_override_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let w = dir.path();
    let config = w.join("experiment.toml");
    fs::write(&config, "seed = 7\n\n[train]\nepochs = 3\nbatch_size = 8\n").unwrap();
    let cfg = config.to_str().unwrap();
    ok(w, &["--config", cfg, "ingest", "--corpus", &fixture("corpus.jsonl")]);
    ok(w, &["--config", cfg, "index", "dense"]);
    ok(w, &["--config", cfg, "build-data", "--mode", "baseline"]);
    ok(w, &["--config", cfg, "--seed", "9", "train", "--epochs", "1"]);
    let m = read_json(&w.join("model/manifest.json"));
    assert_eq!(m["seed"], 9);
    assert_eq!(m["config"]["train"]["epochs"], 1);
    assert_eq!(m["config"]["train"]["batch_size"], 8);
    assert_eq!(m["config"]["decode"]["beam"], 4);
    assert_eq!(m["config"]["pipeline"]["mode"], "baseline");

    let bad = w.join("bad.toml");
    fs::write(&bad, "[train]\nepoch = 3\n").unwrap();
    let out = dsilab(w, &["--config", bad.to_str().unwrap(), "index", "dense"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));
}
