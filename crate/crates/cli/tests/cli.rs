use std::path::Path;
use std::process::{Command, Output};

fn polagree(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polagree"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str], dir: &Path) -> Vec<u8> {
    let out = polagree(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

const TOY: &str = r#"{
  "model": {"layers": 1, "d_model": 16, "heads": 2, "ff_dim": 32, "vocab_size": 200, "max_len": 32, "dropout": 0.0, "seed": 4},
  "pretrain": {"epochs": 1, "batch_size": 32, "max_steps": 6, "dev_limit": 10},
  "finetune": {"epochs": 1, "batch_size": 32, "max_steps": 3, "dev_limit": 10},
  "train": "data/train.jsonl",
  "dev": "data/dev.jsonl",
  "test": "data/test.jsonl",
  "ambivalent": "data/amb.txt",
  "checkpoints": "ckpt",
  "reports": "reports",
  "beam": 2,
  "bootstrap_samples": 50
}"#;

#[test]
fn detect_emits_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("s.txt"), "I'm an amateur.\nI was tired.\n").unwrap();
    std::fs::write(dir.path().join("t.txt"), "Jestem amatorką.\nByłem zmęczony.\n").unwrap();
    let out = String::from_utf8(ok(&["detect", "--src", "s.txt", "--tgt", "t.txt"], dir.path())).unwrap();
    let lines: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0]["attrs"].to_string().contains("feminine"));
    assert!(lines[1]["attrs"].to_string().contains("masculine"));
}

#[test]
fn errors_exit_nonzero_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!polagree(&["frobnicate"], dir.path()).status.success());
    std::fs::write(dir.path().join("bad.json"), r#"{"no_such_field": 1}"#).unwrap();
    let out = polagree(&["--config", "bad.json", "synth", "--n", "10", "--out", "c.jsonl"], dir.path());
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!dir.path().join("c.jsonl").exists());
    let out = polagree(&["split", "--corpus", "missing.jsonl", "--per-group", "2", "--out", "."], dir.path());
    assert!(!out.status.success());
    let out = polagree(&["synth", "--n", "5", "--out", "nowhere/c.jsonl"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn pipeline_is_deterministic_and_reports_ten_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for sub in ["data", "ckpt", "reports", "again"] {
        std::fs::create_dir(d.join(sub)).unwrap();
    }
    std::fs::write(d.join("run.json"), TOY).unwrap();
    let cfg = ["--config", "run.json"];
    let with = |rest: &[&str]| -> Vec<String> { cfg.iter().chain(rest).map(|s| s.to_string()).collect() };
    let run = |rest: &[&str]| {
        let a = with(rest);
        ok(&a.iter().map(String::as_str).collect::<Vec<_>>(), d)
    };
    run(&["synth", "--n", "600", "--seed", "3", "--out", "data/corpus.jsonl", "--ambivalent", "20", "--ambivalent-out", "data/amb.txt"]);
    run(&["synth", "--n", "600", "--seed", "3", "--out", "again/corpus.jsonl"]);
    assert_eq!(std::fs::read(d.join("data/corpus.jsonl")).unwrap(), std::fs::read(d.join("again/corpus.jsonl")).unwrap());
    run(&["split", "--corpus", "data/corpus.jsonl", "--per-group", "2", "--out", "data"]);
    run(&["pretrain", "--out", "ckpt/base.ckpt"]);
    for m in ["Baseline", "TagEnc", "TagDec", "TagEncDec", "EmbPWSum", "EmbAdd", "EmbEnc", "EmbSOS", "EmbEncSOS", "OutBias"] {
        run(&["finetune", "--base", "ckpt/base.ckpt", "--mode", m, "--seed", "1", "--out", &format!("ckpt/{m}.ckpt")]);
    }
    run(&["finetune", "--base", "ckpt/base.ckpt", "--mode", "TagEnc", "--seed", "1", "--out", "again/TagEnc.ckpt"]);
    assert_eq!(std::fs::read(d.join("ckpt/TagEnc.ckpt")).unwrap(), std::fs::read(d.join("again/TagEnc.ckpt")).unwrap());
    assert!(std::fs::read_to_string(d.join("ckpt/TagEnc.log.tsv")).unwrap().starts_with("step\tloss\tdev_chrf\tdev_agree"));

    let table = String::from_utf8(run(&["evaluate", "--modes", "all"])).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 11, "{table}");
    assert_eq!(rows[0].split('\t').count(), 8);
    assert!(rows[1].starts_with("Baseline\t"));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("reports/report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 10);
    assert!(report["ties"]["complete"]["tied"].as_array().is_some());
    assert!(std::fs::read_to_string(d.join("reports/groups.tsv")).unwrap().lines().count() > 1);
    let first = std::fs::read(d.join("reports/report.json")).unwrap();
    run(&["evaluate", "--modes", "all"]);
    assert_eq!(first, std::fs::read(d.join("reports/report.json")).unwrap());

    std::fs::write(d.join("in.txt"), "sp:feminine\tI was tired.\n\tThe car is red.\n").unwrap();
    let out = String::from_utf8(run(&["translate", "--checkpoint", "ckpt/TagEnc.ckpt", "--input", "in.txt"])).unwrap();
    assert_eq!(out.lines().count(), 2);
    let amb = String::from_utf8(run(&["ambid", "--checkpoint", "ckpt/Baseline.ckpt"])).unwrap();
    assert_eq!(amb.trim().parse::<f64>().unwrap(), 100.0);
}

#[test]
fn annotate_and_stopwords_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("s.txt"), "I'm an amateur.\nYou are a person.\nI was tired.\n").unwrap();
    std::fs::write(d.join("t.txt"), "Jestem amatorką.\nJesteś osobą.\nByłem zmęczony.\n").unwrap();
    ok(&["annotate", "--src", "s.txt", "--tgt", "t.txt", "--out", "c.jsonl", "--counts", "counts.tsv"], d);
    assert_eq!(std::fs::read_to_string(d.join("c.jsonl")).unwrap().lines().count(), 3);
    assert!(d.join("counts.tsv").exists());
    ok(&["stopwords", "--src", "s.txt", "--tgt", "t.txt", "--out", "."], d);
    for f in ["stopwords.txt", "kept.tsv", "report.json"] {
        assert!(d.join(f).exists(), "{f}");
    }
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = String::from_utf8(ok(&["gradcheck"], dir.path())).unwrap();
    assert_eq!(out.lines().count(), 10);
}
