mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn slu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slu"))
        .args(args)
        .env_remove("SLU_DATA_DIR")
        .output()
        .expect("run slu")
}

fn ok(args: &[&str]) -> Output {
    let out = slu(args);
    assert!(
        out.status.success(),
        "slu {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn prepare(dir: &Path, extra: &[&str]) {
    let fixture = common::fixture_dir();
    let mut args = vec![
        "prepare",
        "--raw-dir",
        fixture.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    ok(&args);
}

const TINY: [&str; 6] = ["--embedding-dim", "8", "--hidden-dim", "6", "--max-epochs", "3"];

#[test]
fn prepare_writes_all_outputs_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    prepare(&a, &["--kvret-star", "--seed", "4"]);
    prepare(&b, &["--kvret-star", "--seed", "4"]);
    for f in [
        "train.jsonl",
        "dev.jsonl",
        "test.jsonl",
        "vocab.json",
        "stats.json",
        "skipped.txt",
    ] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_probability_recombination_matches_plain_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let (plain, star) = (tmp.path().join("plain"), tmp.path().join("star"));
    prepare(&plain, &[]);
    prepare(&star, &["--kvret-star", "--prob", "0"]);
    assert_eq!(
        fs::read(plain.join("stats.json")).unwrap(),
        fs::read(star.join("stats.json")).unwrap()
    );
    let stats: serde_json::Value = serde_json::from_slice(&fs::read(plain.join("stats.json")).unwrap()).unwrap();
    assert_eq!(
        (stats["train"].as_u64(), stats["dev"].as_u64(), stats["test"].as_u64()),
        (Some(8), Some(3), Some(3))
    );

    let printed = ok(&["stats", "--data-dir", plain.to_str().unwrap()]);
    let printed: serde_json::Value = serde_json::from_slice(&printed.stdout).unwrap();
    assert_eq!(printed, stats);
}

#[test]
fn prepare_without_raw_files_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = slu(&[
        "prepare",
        "--raw-dir",
        tmp.path().to_str().unwrap(),
        "--out-dir",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("kvret_train_public.json"));
}

#[test]
fn train_then_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let run = tmp.path().join("run");
    prepare(&data, &[]);
    let mut args = vec![
        "train",
        "--data-dir",
        data.to_str().unwrap(),
        "--out-dir",
        run.to_str().unwrap(),
    ];
    args.extend_from_slice(&TINY);
    ok(&args);

    let lines: Vec<serde_json::Value> = fs::read_to_string(run.join("metrics.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    for key in [
        "epoch",
        "train_loss",
        "val_loss",
        "slot_p",
        "slot_r",
        "slot_f1",
        "intent_acc",
    ] {
        assert!(lines[0].get(key).is_some(), "missing {key}");
    }

    let report_path = tmp.path().join("report.json");
    let ckpt = run.join("model.ckpt");
    let out = ok(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data-dir",
        data.to_str().unwrap(),
        "--split",
        "dev",
        "--out",
        report_path.to_str().unwrap(),
    ]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(
        report,
        serde_json::from_slice::<serde_json::Value>(&fs::read(&report_path).unwrap()).unwrap()
    );

    let best = lines
        .iter()
        .min_by(|a, b| {
            a["val_loss"]
                .as_f64()
                .unwrap()
                .total_cmp(&b["val_loss"].as_f64().unwrap())
        })
        .unwrap();
    let close = |a: &serde_json::Value, b: &serde_json::Value| (a.as_f64().unwrap() - b.as_f64().unwrap()).abs() < 1e-9;
    assert!(close(&report["slot"]["f1"], &best["slot_f1"]));
    assert!(close(&report["slot"]["p"], &best["slot_p"]));
    assert!(close(&report["intent_acc"], &best["intent_acc"]));

    // Dev gold tags hold these slot types.
    let types: Vec<&String> = report["per_slot_type"].as_object().unwrap().keys().collect();
    assert_eq!(
        types,
        ["date", "distance", "event", "location", "poi_type", "weather_attribute"]
    );

    let missing = slu(&[
        "eval",
        "--checkpoint",
        tmp.path().join("nope.ckpt").to_str().unwrap(),
        "--data-dir",
        data.to_str().unwrap(),
    ]);
    assert!(!missing.status.success());

    // A vocabulary built from a different split no longer matches.
    let other = tmp.path().join("other");
    prepare(&other, &["--min-freq", "2"]);
    let mismatch = slu(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data-dir",
        other.to_str().unwrap(),
    ]);
    assert!(!mismatch.status.success());
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("vocabulary"));
}

#[test]
fn train_rejects_bad_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    fs::write(&cfg, r#"{"lamda": 0.3}"#).unwrap();
    let out = slu(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lamda"));

    let out = slu(&[
        "train",
        "--variant",
        "NoMem",
        "--dli",
        "true",
        "--out-dir",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("NoMem"));
}

#[test]
fn sweep_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    prepare(&data, &[]);
    let csv = tmp.path().join("sweep.csv");
    let mut args = vec![
        "sweep",
        "--data-dir",
        data.to_str().unwrap(),
        "--lambdas",
        "0.3",
        "--seeds",
        "1",
        "--out",
        csv.to_str().unwrap(),
    ];
    args.extend_from_slice(&TINY);
    ok(&args);
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "{text}");
    assert_eq!(lines[0], "lambda,seed,slot_f1,intent_acc");
    assert!(lines[1].starts_with("0.3,1,"));
    assert!(lines[2].starts_with("0.3,mean,"));
    assert_eq!(
        lines[1].split_once(",1,").unwrap().1,
        lines[2].split_once(",mean,").unwrap().1
    );

    ok(&["sweep", "--lambdas", "", "--out", csv.to_str().unwrap()]);
    assert_eq!(fs::read_to_string(&csv).unwrap(), "lambda,seed,slot_f1,intent_acc\n");

    let bad = slu(&["sweep", "--lambdas", "0.3,1.5", "--out", csv.to_str().unwrap()]);
    assert!(!bad.status.success());
}
