//! Acceptance report: one PASS/FAIL line per criterion, then a single
//! assertion over all of them.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fair_core::fixture::reference_fixture;
use fair_core::selftrain::{train, TrainConfig};
use fair_core::Execution;
use fair_testkit::props::{self, Check};
use tempfile::TempDir;

const ORACLE_INSTANCES: u64 = 1000;
const FD_INSTANCES: u64 = 100;
const SUITE_SEEDS: u64 = 64;
const SUITE_TRAINING_SEEDS: u64 = 8;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn sweep(seeds: std::ops::Range<u64>, f: fn(u64) -> Check) -> Result<u64, String> {
    let n = seeds.end - seeds.start;
    for seed in seeds {
        f(seed).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(n)
}

fn timed_sweep(name: &'static str, n: u64, budget: Duration, f: fn(u64) -> Check) -> Outcome {
    let start = Instant::now();
    let result = sweep(0..n, f);
    let took = start.elapsed();
    match result {
        Ok(done) => Outcome {
            name,
            pass: took < budget,
            detail: format!("{done} instances in {:.2}s (budget {}s)", took.as_secs_f64(), budget.as_secs()),
        },
        Err(e) => Outcome { name, pass: false, detail: e },
    }
}

fn final_acc(cfg: &TrainConfig) -> Result<(f64, f64), String> {
    let ds = reference_fixture();
    let out = train(&ds, None, cfg).map_err(|e| e.to_string())?;
    let zs = out.initial_eval_acc.ok_or("no initial accuracy")?;
    let last = out.log.last().and_then(|r| r.eval_acc).ok_or("no final accuracy")?;
    Ok((zs, last))
}

fn sequential() -> TrainConfig {
    TrainConfig { execution: Execution::Sequential, ..TrainConfig::default() }
}

fn fixture_gain() -> Outcome {
    let name = "reference fixture gains >= 10 points single-threaded in < 2 min";
    let start = Instant::now();
    match final_acc(&sequential()) {
        Ok((zs, acc)) => {
            let took = start.elapsed();
            Outcome {
                name,
                pass: acc - zs >= 0.10 && took < Duration::from_secs(120),
                detail: format!("zero-shot {:.1}%, trained {:.1}%, {:.2}s", 100.0 * zs, 100.0 * acc, took.as_secs_f64()),
            }
        }
        Err(e) => Outcome { name, pass: false, detail: e },
    }
}

fn ablation_order() -> Outcome {
    let name = "ablation order full >= no pl weight >= zero-shot";
    let full = final_acc(&sequential());
    let no_pl = final_acc(&TrainConfig { pl_weight_on: false, ..sequential() });
    match (full, no_pl) {
        (Ok((zs, full)), Ok((_, no_pl))) => Outcome {
            name,
            pass: full > zs && full >= no_pl - 0.01 && no_pl > zs - 0.01,
            detail: format!("full {:.1}%, no pl weight {:.1}%, zero-shot {:.1}%", 100.0 * full, 100.0 * no_pl, 100.0 * zs),
        },
        (Err(e), _) | (_, Err(e)) => Outcome { name, pass: false, detail: e },
    }
}

fn invariant_suite() -> Outcome {
    let name = "invariant suite";
    let mut failures = Vec::new();
    let mut cases = 0;
    for (prop, f) in props::ALL {
        let n = if *prop == "training deterministic across runs and workers" { SUITE_TRAINING_SEEDS } else { SUITE_SEEDS };
        match sweep(10_000..10_000 + n, *f) {
            Ok(done) => cases += done,
            Err(e) => failures.push(format!("{prop}: {e}")),
        }
    }
    Outcome {
        name,
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("{} properties, {cases} cases", props::ALL.len())
        } else {
            failures.join("; ")
        },
    }
}

fn status(args: &[&str]) -> Option<i32> {
    Command::new(env!("CARGO_BIN_EXE_fair")).args(args).output().ok()?.status.code()
}

fn exit_statuses() -> Outcome {
    let name = "cli exits 0 on success, 2 on usage or validation, 1 otherwise";
    let dir = TempDir::new().expect("temp dir");
    let path = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let (ds, bad, missing, run) = (path("ds.fairemb"), path("bad.fairemb"), path("missing.fairemb"), path("run"));

    let mut checks: Vec<(&str, Option<i32>, i32)> = Vec::new();
    checks.push(("synth", status(&["synth", "--reference", "--out", &ds]), 0));
    checks.push(("validate", status(&["validate", "--dataset", &ds]), 0));
    checks.push(("train without dataset", status(&["train", "--out", &run]), 2));
    checks.push(("unknown flag", status(&["validate", "--dataset", &ds, "--nope"]), 2));

    if let Ok(mut bytes) = std::fs::read(Path::new(&ds)) {
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        bytes[12 + len..12 + len + 64 * 4].fill(0);
        let _ = std::fs::write(&bad, bytes);
    }
    checks.push(("zero-norm description", status(&["validate", "--dataset", &bad]), 2));
    checks.push(("missing file", status(&["validate", "--dataset", &missing]), 1));

    let wrong: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| *got != Some(*want))
        .map(|(what, got, want)| format!("{what}: got {got:?}, want {want}"))
        .collect();
    Outcome {
        name,
        pass: wrong.is_empty(),
        detail: if wrong.is_empty() { format!("{} invocations", checks.len()) } else { wrong.join("; ") },
    }
}

#[test]
fn acceptance() {
    let outcomes = [
        timed_sweep(
            "scores match brute-force oracles on 1000 instances in < 10 s",
            ORACLE_INSTANCES,
            Duration::from_secs(10),
            props::oracle_equivalence,
        ),
        timed_sweep(
            "gradients match finite differences on 100 instances in < 30 s",
            FD_INSTANCES,
            Duration::from_secs(30),
            props::gradients_match_fd,
        ),
        fixture_gain(),
        ablation_order(),
        invariant_suite(),
        exit_statuses(),
    ];
    for o in &outcomes {
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    assert!(failed.is_empty(), "failed: {failed:?}");
}
