use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fair_core::cda::{init_cda, init_cda_with, load_checkpoint, save_checkpoint, Adapter, Checkpoint};
use fair_core::embdata::{read_dataset, synth_generate, write_dataset, EmbeddingDataset, FormatError, SynthSpec};
use fair_core::eval::{compare_scorers, evaluate, EvalError};
use fair_core::fixture::reference_spec;
use fair_core::selftrain::{train_from, EpochLog, TrainError};
use fair_core::Execution;
use log::{info, warn};

use crate::args::{Command, EvalArgs, InitArgs, ReportArgs, SynthArgs, TrainArgs, ValidateArgs, ZeroshotArgs};
use crate::config::resolve;
use crate::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.fairckp";
pub const LOG_FILE: &str = "log.jsonl";
pub const CONFIG_FILE: &str = "config.json";

pub fn execute(command: Command, exec: Execution) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Validate(a) => validate(a),
        Command::Init(a) => init(a),
        Command::Zeroshot(a) => zeroshot(a, exec),
        Command::Train(a) => train(a, exec),
        Command::Eval(a) => eval(a, exec),
        Command::Report(a) => report(a),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Operational(format!("{}: {e}", path.display()))
}

fn format_err(path: &Path, e: FormatError) -> CliError {
    match e {
        FormatError::Invalid(_) => CliError::Validation(format!("{}: {e}", path.display())),
        other => io_err(path, other),
    }
}

fn train_err(e: TrainError) -> CliError {
    match e {
        TrainError::Config(_) | TrainError::Dataset(_) => CliError::Validation(e.to_string()),
        other => CliError::Operational(other.to_string()),
    }
}

fn eval_err(e: EvalError) -> CliError {
    match e {
        EvalError::Dimension(_) => CliError::Validation(e.to_string()),
        other => CliError::Operational(other.to_string()),
    }
}

fn load_dataset(path: &Path) -> Result<EmbeddingDataset, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let ds = read_dataset(BufReader::new(file)).map_err(|e| format_err(path, e))?;
    info!("loaded {}: {} images, {} classes, d = {}", path.display(), ds.images.len(), ds.num_classes(), ds.header.d);
    Ok(ds)
}

fn load_ckpt(path: &Path) -> Result<Checkpoint, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    load_checkpoint(BufReader::new(file)).map_err(|e| format_err(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

fn save_ckpt(path: &Path, ck: &Checkpoint) -> Result<(), CliError> {
    let mut w = create(path)?;
    save_checkpoint(ck, &mut w).map_err(|e| format_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut spec = if a.reference {
        reference_spec()
    } else if let Some(p) = &a.spec {
        let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
        serde_json::from_str::<SynthSpec>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
    } else {
        SynthSpec::default()
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let ds = synth_generate(&spec).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut w = create(&a.out)?;
    let bytes = write_dataset(&ds, &mut w).map_err(|e| format_err(&a.out, e))?;
    w.flush().map_err(|e| io_err(&a.out, e))?;
    println!("wrote {} ({bytes} bytes, {} images, {} classes)", a.out.display(), ds.images.len(), ds.num_classes());
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<(), CliError> {
    let file = File::open(&a.dataset).map_err(|e| io_err(&a.dataset, e))?;
    match read_dataset(BufReader::new(file)) {
        Ok(ds) => {
            println!("valid: {} images, {} classes, d = {}, d_cls = {}", ds.images.len(), ds.num_classes(), ds.header.d, ds.header.d_cls);
            Ok(())
        }
        Err(FormatError::Invalid(violations)) => {
            for v in &violations {
                println!("{v}");
            }
            Err(CliError::Validation(format!("{}: {} violation(s)", a.dataset.display(), violations.len())))
        }
        Err(e) => Err(io_err(&a.dataset, e)),
    }
}

fn init(a: InitArgs) -> Result<(), CliError> {
    let ds = load_dataset(&a.dataset)?;
    let cda = init_cda_with(&ds.classes, a.prenormalize).map_err(|e| CliError::Validation(e.to_string()))?;
    let problems = cda.violations();
    if !problems.is_empty() {
        return Err(CliError::Validation(problems.join("; ")));
    }
    let ck = Checkpoint::new(&cda, &Adapter::fresh(ds.header.d), 0, "init");
    save_ckpt(&a.out, &ck)?;
    println!("wrote {} ({} anchors, d = {})", a.out.display(), cda.num_classes(), cda.dim());
    Ok(())
}

fn zeroshot(a: ZeroshotArgs, exec: Execution) -> Result<(), CliError> {
    let ds = load_dataset(&a.dataset)?;
    if a.k == 0 || a.k > a.n_use {
        return Err(CliError::Usage(format!("need 1 <= k <= n_use, got k = {}, n_use = {}", a.k, a.n_use)));
    }
    let cda = match &a.checkpoint {
        Some(p) => load_ckpt(p)?.cda,
        None => init_cda(&ds.classes).map_err(|e| CliError::Validation(e.to_string()))?,
    };
    let table = compare_scorers(&ds, &cda, a.k, a.n_use, a.seed, exec).map_err(eval_err)?;
    ensure_dir(&a.out)?;
    write_text(&a.out.join("zeroshot.json"), &(table.to_json() + "\n"))?;
    let csv = table.summary_csv();
    write_text(&a.out.join("zeroshot.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn train(a: TrainArgs, exec: Execution) -> Result<(), CliError> {
    let run = resolve(&a)?;
    let mut cfg = run.train.clone();
    cfg.execution = exec;
    let hash = cfg.hash();
    let cfg_json = serde_json::to_string_pretty(&cfg).expect("config serializes");
    info!("resolved config {hash}: {}", serde_json::to_string(&cfg).expect("config serializes"));

    let ds = load_dataset(&run.dataset)?;
    let eval_ds = run.eval_dataset.as_deref().map(load_dataset).transpose()?;
    let resume = run.resume.as_deref().map(load_ckpt).transpose()?;
    if let Some(mismatch) = resume.as_ref().and_then(|ck| ck.check_config(&hash)) {
        warn!("{mismatch}");
    }

    let out = train_from(&ds, eval_ds.as_ref(), &cfg, resume.as_ref()).map_err(train_err)?;

    ensure_dir(&run.out)?;
    save_ckpt(&run.out.join(CHECKPOINT_FILE), &out.checkpoint)?;
    let mut log = String::new();
    for rec in &out.log {
        log.push_str(&serde_json::to_string(rec).expect("log record serializes"));
        log.push('\n');
    }
    write_text(&run.out.join(LOG_FILE), &log)?;
    write_text(&run.out.join(CONFIG_FILE), &format!("{cfg_json}\n"))?;

    if let Some(acc) = out.initial_eval_acc {
        println!("zero-shot top1 {acc:.4}");
    }
    if let Some(last) = out.log.last() {
        match last.eval_acc {
            Some(acc) => println!("epoch {} top1 {acc:.4}", last.epoch),
            None => println!("epoch {} L {:.6}", last.epoch, last.l),
        }
    }
    println!("config {hash}");
    Ok(())
}

fn eval(a: EvalArgs, exec: Execution) -> Result<(), CliError> {
    let ds = load_dataset(&a.dataset)?;
    let ck = load_ckpt(&a.checkpoint)?;
    if ck.cda.class_names != ds.class_names() {
        return Err(CliError::Validation("checkpoint classes do not match the dataset".into()));
    }
    let m = evaluate(&ds, &ck.cda, &ck.adapter, exec).map_err(eval_err)?;
    if let Some(dir) = &a.out {
        ensure_dir(dir)?;
        write_text(&dir.join("metrics.json"), &(m.to_json() + "\n"))?;
        write_text(&dir.join("confusion.csv"), &m.confusion_csv(&ds.class_names()))?;
    }
    println!("top1 {:.4}", m.top1);
    if let Some(macro_acc) = m.macro_accuracy {
        println!("macro {macro_acc:.4}");
    }
    Ok(())
}

fn percent(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{:.4}", 100.0 * x))
}

fn report(a: ReportArgs) -> Result<(), CliError> {
    let file = File::open(&a.log).map_err(|e| io_err(&a.log, e))?;
    let mut csv = String::from("epoch,step,L_st,L_reg,L,pl_acc_pct,eval_acc_pct,gamma_mean,degenerate_count\n");
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(&a.log, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: EpochLog = serde_json::from_str(&line)
            .map_err(|e| CliError::Validation(format!("{} line {}: {e}", a.log.display(), n + 1)))?;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.step,
            r.l_st,
            r.l_reg,
            r.l,
            percent(r.pl_acc),
            percent(r.eval_acc),
            r.gamma_mean,
            r.degenerate_count
        );
    }
    write_text(&a.out, &csv)?;
    println!("wrote {}", a.out.display());
    Ok(())
}
