use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fair")).args(args).output().expect("spawn fair")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_dataset(dir: &Path) -> PathBuf {
    let spec = dir.join("spec.json");
    fs::write(
        &spec,
        r#"{"classes":3,"images":24,"crops":16,"strong":2,"dim":8,"cls_dim":6,"descriptions":2,"seed":5}"#,
    )
    .unwrap();
    let ds = dir.join("small.fairemb");
    let out = fair(&["synth", "--spec", p(&spec), "--out", p(&ds)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    ds
}

fn reference(dir: &Path) -> PathBuf {
    let ds = dir.join("ref.fairemb");
    assert_eq!(code(&fair(&["synth", "--reference", "--out", p(&ds)])), 0);
    ds
}

fn effective_config(run: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap()
}

#[test]
fn synth_then_validate_succeeds() {
    let dir = TempDir::new().unwrap();
    let ds = small_dataset(dir.path());
    let out = fair(&["validate", "--dataset", p(&ds)]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).starts_with("valid: 24 images, 3 classes"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let ds = small_dataset(dir.path());
    let run = dir.path().join("run");
    assert_eq!(code(&fair(&["train", "--out", p(&run)])), 2);
    assert_eq!(code(&fair(&["train", "--dataset", p(&ds)])), 2);
    assert_eq!(code(&fair(&["train", "--dataset", p(&ds), "--out", p(&run), "--frobnicate"])), 2);
    assert_eq!(code(&fair(&["train", "--dataset", p(&ds), "--out", p(&run), "--lr", "-1"])), 2);
    assert_eq!(code(&fair(&["train", "--dataset", p(&ds), "--out", p(&run), "--k", "9", "--n-use", "4"])), 2);
    assert_eq!(code(&fair(&["train", "--dataset", p(&ds), "--out", p(&run), "--ema-momentum", "0.5"])), 2);
    assert_eq!(code(&fair(&["--workers", "0", "validate", "--dataset", p(&ds)])), 2);
    assert_eq!(code(&fair(&[])), 2);
    assert!(!run.exists());

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"epochs": 1, "learning_rat": 0.1}"#).unwrap();
    let out = fair(&["train", "--config", p(&cfg), "--dataset", p(&ds), "--out", p(&run)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rat"));
}

#[test]
fn help_exits_0() {
    assert_eq!(code(&fair(&["--help"])), 0);
    assert_eq!(code(&fair(&["train", "--help"])), 0);
}

#[test]
fn invalid_dataset_exits_2() {
    let dir = TempDir::new().unwrap();
    let ds = small_dataset(dir.path());
    let mut bytes = fs::read(&ds).unwrap();
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let first = 12 + header_len;
    bytes[first..first + 8 * 4].fill(0);
    let bad = dir.path().join("zero_row.fairemb");
    fs::write(&bad, &bytes).unwrap();

    let out = fair(&["validate", "--dataset", p(&bad)]);
    assert_eq!(code(&out), 2);
    assert!(!stdout(&out).is_empty(), "violations are listed");
    let run = dir.path().join("run");
    assert_eq!(code(&fair(&["train", "--dataset", p(&bad), "--out", p(&run)])), 2);
}

#[test]
fn operational_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.fairemb");
    assert_eq!(code(&fair(&["validate", "--dataset", p(&missing)])), 1);

    let ds = small_dataset(dir.path());
    let bytes = fs::read(&ds).unwrap();
    let truncated = dir.path().join("truncated.fairemb");
    fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(code(&fair(&["validate", "--dataset", p(&truncated)])), 1);

    let garbage = dir.path().join("garbage.fairckp");
    fs::write(&garbage, b"not a checkpoint").unwrap();
    assert_eq!(code(&fair(&["eval", "--dataset", p(&ds), "--checkpoint", p(&garbage)])), 1);
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let ds = small_dataset(dir.path());
    let run = dir.path().join("run");
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"learning_rate": 1e-6, "epochs": 1, "batch_size": 8}"#).unwrap();
    let out = fair(&["train", "--config", p(&cfg), "--dataset", p(&ds), "--out", p(&run), "--lr", "1e-4"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let eff = effective_config(&run);
    assert_eq!(eff["learning_rate"], 1e-4);
    assert_eq!(eff["epochs"], 1);
    assert_eq!(eff["batch_size"], 8);
}

#[test]
fn config_file_paths_are_used() {
    let dir = TempDir::new().unwrap();
    let ds = small_dataset(dir.path());
    let run = dir.path().join("run");
    let cfg = dir.path().join("cfg.json");
    let text = serde_json::json!({"dataset": ds, "out": run, "epochs": 1});
    fs::write(&cfg, text.to_string()).unwrap();
    assert_eq!(code(&fair(&["train", "--config", p(&cfg)])), 0);
    assert!(run.join("checkpoint.fairckp").exists());
    assert_eq!(fs::read_to_string(run.join("log.jsonl")).unwrap().lines().count(), 1);
}

#[test]
fn defaults_are_documented_values() {
    let dir = TempDir::new().unwrap();
    let ds = small_dataset(dir.path());
    let run = dir.path().join("run");
    let out = fair(&["train", "--dataset", p(&ds), "--out", p(&run)]);
    assert_eq!(code(&out), 0);
    let eff = effective_config(&run);
    assert_eq!(eff["n_use"], 16);
    assert_eq!(eff["k"], 4);
    assert_eq!(eff["epochs"], 15);
    assert_eq!(eff["batch_size"], 32);
    assert_eq!(eff["learning_rate"], 1e-4);
    assert_eq!(eff["logit_scale"], 100.0);
    assert_eq!(eff["pl_weight_on"], true);
    assert_eq!(eff["las_on"], true);
    assert_eq!(eff["fairg_mode"], false);
    assert_eq!(fs::read_to_string(run.join("log.jsonl")).unwrap().lines().count(), 15);
}

#[test]
fn zeroshot_reports_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let ds = small_dataset(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&fair(&["zeroshot", "--dataset", p(&ds), "--out", p(&a), "--n-use", "4", "--k", "2"])), 0);
    assert_eq!(code(&fair(&["--workers", "1", "zeroshot", "--dataset", p(&ds), "--out", p(&b), "--n-use", "4", "--k", "2"])), 0);
    for name in ["zeroshot.json", "zeroshot.csv"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let csv = fs::read_to_string(a.join("zeroshot.csv")).unwrap();
    let scorers: Vec<_> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    assert_eq!(scorers, ["CLIP", "CuPL", "WCA", "LAS"]);
}

#[test]
fn worker_count_does_not_change_training() {
    let dir = TempDir::new().unwrap();
    let ds = small_dataset(dir.path());
    let mut logs = Vec::new();
    for workers in ["1", "2", "5"] {
        let run = dir.path().join(format!("run{workers}"));
        let out = fair(&["--workers", workers, "train", "--dataset", p(&ds), "--out", p(&run), "--epochs", "3", "--batch", "8"]);
        assert_eq!(code(&out), 0);
        logs.push((fs::read(run.join("log.jsonl")).unwrap(), fs::read(run.join("checkpoint.fairckp")).unwrap()));
    }
    assert!(logs.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn resume_continues_epoch_numbering() {
    let dir = TempDir::new().unwrap();
    let ds = small_dataset(dir.path());
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    assert_eq!(code(&fair(&["train", "--dataset", p(&ds), "--out", p(&first), "--epochs", "2"])), 0);
    let ck = first.join("checkpoint.fairckp");
    assert_eq!(code(&fair(&["train", "--dataset", p(&ds), "--out", p(&second), "--epochs", "3", "--resume", p(&ck)])), 0);
    let log = fs::read_to_string(second.join("log.jsonl")).unwrap();
    let epochs: Vec<u64> = log
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["epoch"].as_u64().unwrap())
        .collect();
    assert_eq!(epochs, [3, 4, 5]);
}

#[test]
fn init_checkpoint_evaluates_like_zero_shot_training_start() {
    let dir = TempDir::new().unwrap();
    let ds = small_dataset(dir.path());
    let ck = dir.path().join("init.fairckp");
    assert_eq!(code(&fair(&["init", "--dataset", p(&ds), "--out", p(&ck)])), 0);
    let ev = fair(&["eval", "--dataset", p(&ds), "--checkpoint", p(&ck)]);
    assert_eq!(code(&ev), 0);
    let run = dir.path().join("run");
    let tr = fair(&["train", "--dataset", p(&ds), "--eval-dataset", p(&ds), "--out", p(&run), "--epochs", "1"]);
    assert_eq!(code(&tr), 0);
    let init_top1 = stdout(&ev).lines().next().unwrap().trim_start_matches("top1 ").to_string();
    assert!(stdout(&tr).starts_with(&format!("zero-shot top1 {init_top1}")), "{}", stdout(&tr));
}

#[test]
fn report_converts_log_to_percent_csv() {
    let dir = TempDir::new().unwrap();
    let ds = small_dataset(dir.path());
    let run = dir.path().join("run");
    assert_eq!(code(&fair(&["train", "--dataset", p(&ds), "--eval-dataset", p(&ds), "--out", p(&run), "--epochs", "2"])), 0);
    let csv = dir.path().join("report.csv");
    assert_eq!(code(&fair(&["report", "--log", p(&run.join("log.jsonl")), "--out", p(&csv)])), 0);
    let text = fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let acc: f64 = row[6].parse().unwrap();
        assert!((0.0..=100.0).contains(&acc));
    }
}

#[test]
fn reference_training_gains_ten_points() {
    let dir = TempDir::new().unwrap();
    let ds = reference(dir.path());
    let run = dir.path().join("run");
    let tr = fair(&["train", "--dataset", p(&ds), "--eval-dataset", p(&ds), "--out", p(&run)]);
    assert_eq!(code(&tr), 0);
    let zs: f64 = stdout(&tr).lines().next().unwrap().rsplit(' ').next().unwrap().parse().unwrap();
    let ev = fair(&["eval", "--dataset", p(&ds), "--checkpoint", p(&run.join("checkpoint.fairckp")), "--out", p(&dir.path().join("ev"))]);
    assert_eq!(code(&ev), 0);
    let top1: f64 = stdout(&ev).lines().next().unwrap().rsplit(' ').next().unwrap().parse().unwrap();
    assert!(top1 >= zs + 0.10, "zero-shot {zs}, trained {top1}");
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("ev/metrics.json")).unwrap()).unwrap();
    assert!((metrics["top1"].as_f64().unwrap() - top1).abs() < 1e-4);
}
