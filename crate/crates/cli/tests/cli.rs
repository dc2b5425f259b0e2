use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use leakaudit::model::{self, Manifest};
use leakaudit::synth::{compose_id, EraFixture, EPOCH_2015_MS};
use leakaudit::{Dataset, LabelSet, Record};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leakaudit"))
        .args(args)
        .env_remove("LEAKAUDIT_CONFIG_DIR")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn save(ds: &Dataset, path: &Path) -> String {
    model::save(ds, path).unwrap();
    let m = Manifest::with_labels(ds.label_set().labels().iter().cloned());
    std::fs::write(format!("{}.manifest.json", path.display()), serde_json::to_string(&m).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn era(dir: &Path) -> String {
    save(&EraFixture::default().generate(3), &dir.join("era.jsonl"))
}

/// 20 articles of 5 tweets; articles alternate fake/real.
fn articles(dir: &Path) -> (String, Dataset) {
    let recs = (0..100)
        .map(|i| {
            let a = i / 5;
            Record::new(
                compose_id(EPOCH_2015_MS + i as i64 * 1000, 0, 0),
                format!("tweet {i}"),
                if a % 2 == 0 { "fake" } else { "real" },
            )
            .with_article(format!("art{a}"))
        })
        .collect();
    let ds = Dataset::new("articles", LabelSet::new(["fake", "real"]).unwrap(), recs).unwrap();
    (save(&ds, &dir.join("articles.jsonl")), ds)
}

fn p(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

#[test]
fn presets_are_listed() {
    let o = cli(&["presets"]);
    assert!(o.status.success());
    let s = stdout(&o);
    for name in ["twitter15", "twitter16", "pheme5-lc", "politifact", "wnut2020"] {
        assert!(s.contains(name), "{name} missing from {s}");
    }
}

#[test]
fn presets_can_come_from_config_dir() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("presets.json"),
        r#"[{"name": "mine", "description": "custom", "spec": {"ratios": [0.5, 0.25, 0.25]}}]"#,
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_leakaudit"))
        .arg("presets")
        .env("LEAKAUDIT_CONFIG_DIR", dir.path())
        .output()
        .unwrap();
    let s = stdout(&o);
    assert!(s.contains("mine") && !s.contains("twitter15"), "{s}");
}

#[test]
fn split_requires_seed_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let data = era(dir.path());
    let out = p(dir.path(), "s.json");
    let o = cli(&["split", &data, "--preset", "twitter16", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());

    let mut files = Vec::new();
    for name in ["a.json", "b.json"] {
        let path = p(dir.path(), name);
        let o = cli(&["split", &data, "--preset", "twitter16", "--seed", "5", "--out", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("total"));
        files.push(std::fs::read_to_string(path).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert!(files[0].contains("\"preset\": \"twitter16\""));
}

#[test]
fn unknown_preset_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = era(dir.path());
    let out = p(dir.path(), "s.json");
    let o = cli(&["split", &data, "--preset", "nope", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn eval_scores_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let data = era(dir.path());
    let split = p(dir.path(), "s.json");
    assert!(cli(&["split", &data, "--seed", "1", "--out", split.to_str().unwrap()]).status.success());
    let ds = EraFixture::default().generate(3);
    let mut csv = String::from("id,label\n");
    for r in ds.records() {
        csv.push_str(&format!("{},{}\n", r.id, r.label));
    }
    let preds = p(dir.path(), "pred.csv");
    std::fs::write(&preds, csv).unwrap();
    let json = p(dir.path(), "eval.json");
    let o = cli(&[
        "eval",
        &data,
        "--split",
        split.to_str().unwrap(),
        "--predictions",
        preds.to_str().unwrap(),
        "--json-out",
        json.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("macro F1  1.0000"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["macro_f1"], 1.0);
    assert!(PathBuf::from(format!("{}.meta.json", json.display())).exists());

    let o = cli(&[
        "eval",
        &data,
        "--split",
        split.to_str().unwrap(),
        "--predictions",
        p(dir.path(), "absent.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn aggregate_votes_per_article() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ds) = articles(dir.path());
    // drop two tweets of art0 so it falls below three votes
    let mut csv = String::from("id,label\n");
    for (i, r) in ds.records().iter().enumerate() {
        if i == 0 || i == 1 || i == 2 {
            continue;
        }
        csv.push_str(&format!("{},{}\n", r.id, r.label));
    }
    let preds = p(dir.path(), "pred.csv");
    std::fs::write(&preds, csv).unwrap();
    let out = p(dir.path(), "articles.csv");
    let o = cli(&["aggregate", &data, "--predictions", preds.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 19);
    assert!(!text.contains("art0,"));
    assert!(text.contains("art1,real"));
    assert!(stdout(&o).contains("macro F1  1.0000"));
}

#[test]
fn rebalance_writes_dataset_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let f = EraFixture::default();
    let ds = f.generate(3);
    let data = save(&ds, &dir.path().join("era.jsonl"));
    let pool = save(&f.broad_pool("true", 3000, &ds, 4), &dir.path().join("pool.jsonl"));
    let out = p(dir.path(), "rebalanced.jsonl");
    let report = p(dir.path(), "report.json");
    let args = [
        "rebalance",
        &data,
        "--pool",
        &pool,
        "--anchor-label",
        "true",
        "--window",
        "2d",
        "--seed",
        "9",
        "--trees",
        "30",
        "--out",
        out.to_str().unwrap(),
        "--report-out",
        report.to_str().unwrap(),
    ];
    let o = cli(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(&out).unwrap();
    let rebalanced = model::load(&out, &Manifest::default()).unwrap();
    assert_eq!(rebalanced.len(), ds.len());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(v["leak_after"]["leakage_score"].as_f64().unwrap() < 0.15);

    assert!(cli(&args).status.success());
    assert_eq!(std::fs::read(&out).unwrap(), first);

    let no_seed: Vec<&str> = args.iter().copied().filter(|a| *a != "--seed" && *a != "9").collect();
    assert_eq!(cli(&no_seed).status.code(), Some(1));
}

#[test]
fn inspect_prints_fingerprint() {
    let dir = tempfile::tempdir().unwrap();
    let data = era(dir.path());
    let hist = p(dir.path(), "hist.csv");
    let json = p(dir.path(), "fp.json");
    let o = cli(&[
        "inspect",
        &data,
        "--histogram-out",
        hist.to_str().unwrap(),
        "--json-out",
        json.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("records      2000"), "{s}");
    assert!(s.contains("posting-time distance true vs false: 1.000"), "{s}");
    assert!(std::fs::read_to_string(hist).unwrap().lines().count() > 1);
}

#[test]
fn audit_writes_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = era(dir.path());
    let json = p(dir.path(), "audit.json");
    let csv_dir = p(dir.path(), "csv");
    let o = cli(&[
        "audit",
        &data,
        "--k",
        "3",
        "--n-splits",
        "2",
        "--trees",
        "20",
        "--keywords",
        "police,fake",
        "--json-out",
        json.to_str().unwrap(),
        "--csv-dir",
        csv_dir.to_str().unwrap(),
        "--scatter-label",
        "true",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("gate: FAIL"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(v["gate"]["passed"], false);
    assert_eq!(v["id_leak"]["per_k"][0]["verdict"], "severe");
    for f in ["tokens.csv", "duplicates.csv", "contamination.csv", "timestamps.csv", "scatter_true.csv"] {
        assert!(csv_dir.join(f).exists(), "{f}");
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cli(&["audit"]).status.code(), Some(1));
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
}

#[test]
fn eval_reports_positive_class() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ds) = articles(dir.path());
    let split = p(dir.path(), "s.json");
    assert!(cli(&["split", &data, "--seed", "2", "--ratios", "0.5,0,0.5", "--out", split.to_str().unwrap()]).status.success());
    let mut csv = String::from("id,label\n");
    for r in ds.records() {
        csv.push_str(&format!("{},fake\n", r.id));
    }
    let preds = p(dir.path(), "pred.csv");
    std::fs::write(&preds, csv).unwrap();
    let base = ["eval", &data, "--split", split.to_str().unwrap(), "--predictions", preds.to_str().unwrap()];
    let o = cli(&[&base[..], &["--positive", "fake"]].concat());
    assert!(o.status.success());
    // half the test set is fake: precision 0.5, recall 1
    assert!(stdout(&o).contains("positive-class F1 (fake) 0.6667"), "{}", stdout(&o));
    assert_eq!(cli(&[&base[..], &["--positive", "satire"]].concat()).status.code(), Some(1));
}
