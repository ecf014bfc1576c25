use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn attnscore(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_attnscore"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = attnscore(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small dataset: 6+6 training and 4+4 test videos of 32..=40 segments, D = 8.
fn small_data(dir: &Path) {
    ok(&[
        "gen-synthetic",
        "--out",
        s(dir),
        "--dim",
        "8",
        "--normal",
        "6",
        "--abnormal",
        "6",
        "--test-normal",
        "4",
        "--test-abnormal",
        "4",
        "--min-segments",
        "32",
        "--max-segments",
        "40",
    ]);
}

fn train_small(data: &Path, run: &Path, iters: &str) {
    ok(&[
        "train",
        "--manifest",
        s(&data.join("train.jsonl")),
        "--out",
        s(run),
        "--da",
        "4",
        "--T",
        "8",
        "--iters",
        iters,
    ]);
}

#[test]
fn count_params_default_configuration() {
    assert_eq!(ok(&["count-params"]).trim(), "328004");
    assert_eq!(
        ok(&["count-params", "--da", "128", "--r", "7"]).trim(),
        "721992"
    );
}

#[test]
fn default_synthetic_train_manifest_has_100_entries() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen-synthetic", "--out", s(dir.path())]);
    let manifest = fs::read_to_string(dir.path().join("train.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 100);
}

#[test]
fn regeneration_is_bitwise_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    small_data(a.path());
    small_data(b.path());
    let mut files = 0;
    for sub in ["", "features", "gt"] {
        for entry in fs::read_dir(a.path().join(sub)).unwrap() {
            let path = entry.unwrap().path();
            if path.is_file() {
                let rel = path.strip_prefix(a.path()).unwrap();
                assert_eq!(
                    fs::read(&path).unwrap(),
                    fs::read(b.path().join(rel)).unwrap()
                );
                files += 1;
            }
        }
    }
    assert!(files > 20);
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    small_data(&data);
    let cases: [&[&str]; 4] = [
        &["--lr", "-1"],
        &["--da", "0"],
        &["--dropout", "1.5"],
        &["--iters", "0"],
    ];
    let manifest = data.join("train.jsonl");
    for (k, extra) in cases.iter().enumerate() {
        let run = dir.path().join(format!("run{k}"));
        let mut args = vec!["train", "--manifest", s(&manifest), "--out", s(&run)];
        args.extend_from_slice(extra);
        assert!(!attnscore(&args).status.success(), "{extra:?} accepted");
        assert!(!run.exists(), "{extra:?} created output");
    }
    let bad = dir.path().join("bad");
    assert!(
        !attnscore(&["gen-synthetic", "--out", s(&bad), "--fraction", "0"])
            .status
            .success()
    );
    assert!(!bad.exists());
}

#[test]
fn train_evaluate_predict_inspect() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = (dir.path().join("data"), dir.path().join("run"));
    small_data(&data);
    train_small(&data, &run, "20");
    let loss = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 21);
    assert_eq!(loss.lines().next(), Some("iteration,loss"));

    let eval = dir.path().join("eval");
    let text = ok(&[
        "evaluate",
        "--manifest",
        s(&data.join("test.jsonl")),
        "--checkpoint",
        s(&run.join("best.ckpt")),
        "--out",
        s(&eval),
        "--ap",
    ]);
    assert!(text.contains("auc"));
    let kv = fs::read_to_string(eval.join("report.kv")).unwrap();
    assert!(kv.lines().any(|l| l.starts_with("ap=")));
    assert!(fs::read_to_string(eval.join("roc.csv"))
        .unwrap()
        .starts_with("fpr,tpr\n"));

    let features = data.join("features").join(
        fs::read_dir(data.join("features"))
            .unwrap()
            .next()
            .unwrap()
            .unwrap()
            .file_name(),
    );
    let scores = dir.path().join("scores.csv");
    ok(&[
        "predict",
        "--checkpoint",
        s(&run.join("final.ckpt")),
        "--features",
        s(&features),
        "--frames",
        "600",
        "--out",
        s(&scores),
    ]);
    let scores = fs::read_to_string(&scores).unwrap();
    assert_eq!(scores.lines().next(), Some("frame_index,score"));
    assert_eq!(scores.lines().count(), 601);

    let inspect = dir.path().join("inspect");
    let printed = ok(&[
        "inspect-attention",
        "--checkpoint",
        s(&run.join("best.ckpt")),
        "--features",
        s(&features),
        "--out",
        s(&inspect),
    ]);
    let csv = fs::read_to_string(inspect.join("attention.csv")).unwrap();
    let segments = printed
        .split_whitespace()
        .nth(1)
        .unwrap()
        .split('x')
        .nth(1)
        .unwrap();
    let segments: usize = segments.trim_end_matches(',').parse().unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().all(|l| l.split(',').count() == segments));
    assert!(fs::read(inspect.join("attention.pgm"))
        .unwrap()
        .starts_with(b"P5\n"));
}

#[test]
fn evaluate_without_ground_truth_fails() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = (dir.path().join("data"), dir.path().join("run"));
    small_data(&data);
    train_small(&data, &run, "2");
    let out = attnscore(&[
        "evaluate",
        "--manifest",
        s(&data.join("train.jsonl")),
        "--checkpoint",
        s(&run.join("final.ckpt")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ground truth"));
}

#[test]
fn width_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (data, run) = (dir.path().join("data"), dir.path().join("run"));
    small_data(&data);
    train_small(&data, &run, "2");
    let wide = dir.path().join("wide");
    ok(&[
        "gen-synthetic",
        "--out",
        s(&wide),
        "--dim",
        "9",
        "--normal",
        "2",
        "--abnormal",
        "2",
        "--test-normal",
        "2",
        "--test-abnormal",
        "2",
    ]);
    let out = attnscore(&[
        "evaluate",
        "--manifest",
        s(&wide.join("test.jsonl")),
        "--checkpoint",
        s(&run.join("final.ckpt")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("feature width"));
}
