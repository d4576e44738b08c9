use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tcdedup")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let data = root.join("data");
        assert!(run(&["synth", "--out-dir", s(&data), "--cases", "30", "--projects", "2", "--seed", "4"])
            .status
            .success());
        assert!(run(&[
            "train-embeddings",
            "--corpus",
            s(&data.join("corpus.jsonl")),
            "--out",
            s(&root.join("vectors.txt")),
        ])
        .status
        .success());
        Fixture { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

#[test]
fn detect_writes_one_verdict_per_pair() {
    let f = Fixture::new();
    let out = run(&[
        "detect",
        "--corpus",
        s(&f.path("data/corpus.jsonl")),
        "--extractions",
        s(&f.path("data/annotations.jsonl")),
        "--embeddings",
        s(&f.path("vectors.txt")),
        "--out",
        s(&f.path("verdicts.jsonl")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let verdicts = std::fs::read_to_string(f.path("verdicts.jsonl")).unwrap();
    let labels = std::fs::read_to_string(f.path("data/labels.jsonl")).unwrap();
    assert_eq!(verdicts.lines().count(), labels.lines().count());
    let first: serde_json::Value = serde_json::from_str(verdicts.lines().next().unwrap()).unwrap();
    for key in ["id_a", "id_b", "redundant", "direction", "totally_equivalent", "reasons"] {
        assert!(first.get(key).is_some(), "verdict lacks {key}");
    }

    let eval = run(&[
        "evaluate",
        "--labels",
        s(&f.path("data/labels.jsonl")),
        "--verdicts",
        s(&f.path("verdicts.jsonl")),
        "--out",
        s(&f.path("metrics.json")),
    ]);
    assert!(eval.status.success());
    assert!(String::from_utf8_lossy(&eval.stdout).starts_with("detection"));
}

#[test]
fn ablate_single_category_prints_one_row() {
    let f = Fixture::new();
    let out = run(&[
        "ablate",
        "--corpus",
        s(&f.path("data/corpus.jsonl")),
        "--extractions",
        s(&f.path("data/annotations.jsonl")),
        "--embeddings",
        s(&f.path("vectors.txt")),
        "--labels",
        s(&f.path("data/labels.jsonl")),
        "--drop",
        "Manner",
        "--out",
        s(&f.path("ablation.jsonl")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("none"));
    assert!(rows[1].starts_with("Manner"));
    assert_eq!(std::fs::read_to_string(f.path("ablation.jsonl")).unwrap().lines().count(), 2);
}

#[test]
fn baseline_and_apps_write_their_files() {
    let f = Fixture::new();
    let corpus = f.path("data/corpus.jsonl");
    let vectors = f.path("vectors.txt");
    assert!(run(&["baseline", "--corpus", s(&corpus), "--embeddings", s(&vectors), "--out", s(&f.path("b.jsonl"))])
        .status
        .success());
    assert!(f.path("b.jsonl.skipped").exists());
    let apps = f.path("apps");
    let out = run(&[
        "apps",
        "--corpus",
        s(&corpus),
        "--extractions",
        s(&f.path("data/annotations.jsonl")),
        "--embeddings",
        s(&vectors),
        "--out-dir",
        s(&apps),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let groups = std::fs::read_to_string(apps.join("groups.jsonl")).unwrap();
    let members: usize = groups
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["group"].as_array().unwrap().len())
        .sum();
    assert_eq!(members, 30);
    assert!(apps.join("dependence.jsonl").exists() && apps.join("completeness.jsonl").exists());
}

#[test]
fn evaluate_without_labels_file_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let verdicts = dir.path().join("v.jsonl");
    std::fs::write(&verdicts, "").unwrap();
    let out = run(&[
        "evaluate",
        "--labels",
        s(&dir.path().join("missing.jsonl")),
        "--verdicts",
        s(&verdicts),
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["detect", "--corpus"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "threshold = 0.9\nwindow_size = 3\n").unwrap();
    let out = run(&["--config", s(&config), "preprocess", "--corpus", "x", "--out", "y"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("window_size"));
}

#[test]
fn training_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.jsonl");
    std::fs::write(&corpus, "{\"id\":\"a\",\"project\":\"p\",\"summary\":\"same same\"}\n").unwrap();
    let out = run(&["train-embeddings", "--corpus", s(&corpus), "--out", s(&dir.path().join("v.txt"))]);
    assert_eq!(out.status.code(), Some(2));
}
