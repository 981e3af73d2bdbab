//! Run configuration: flag > config file > default.

use std::path::{Path, PathBuf};

use fair_core::selftrain::{PbarMode, TrainConfig};
use serde_json::{Map, Value};

use crate::args::{PbarArg, TrainArgs};
use crate::CliError;

const PATH_KEYS: [&str; 4] = ["dataset", "eval_dataset", "resume", "out"];
const DEFAULT_EMA_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub dataset: PathBuf,
    pub eval_dataset: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Default)]
struct FileConfig {
    train: TrainConfig,
    paths: [Option<PathBuf>; 4],
}

fn read_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Operational(format!("cannot read config {}: {e}", path.display())))?;
    parse_file(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn parse_file(text: &str) -> Result<FileConfig, String> {
    let mut map: Map<String, Value> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let mut paths: [Option<PathBuf>; 4] = Default::default();
    for (slot, key) in paths.iter_mut().zip(PATH_KEYS) {
        match map.remove(key) {
            None | Some(Value::Null) => {}
            Some(Value::String(s)) => *slot = Some(PathBuf::from(s)),
            Some(other) => return Err(format!("`{key}` must be a path string, got {other}")),
        }
    }
    let train = serde_json::from_value(Value::Object(map)).map_err(|e| e.to_string())?;
    Ok(FileConfig { train, paths })
}

pub fn resolve(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let file = match &args.config {
        Some(p) => read_file(p)?,
        None => FileConfig::default(),
    };
    let [f_dataset, f_eval, f_resume, f_out] = file.paths;
    let mut cfg = file.train;
    let flags = &args.flags;

    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = flags.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = flags.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = flags.n_use {
        cfg.n_use = v;
    }
    if let Some(v) = flags.k {
        cfg.k = v;
    }
    if let Some(v) = flags.logit_scale {
        cfg.logit_scale = v;
    }
    if flags.no_pl_weight {
        cfg.pl_weight_on = false;
    }
    if flags.no_las {
        cfg.las_on = false;
    }
    if flags.fair_g {
        cfg.fairg_mode = true;
    }
    if flags.topk_renorm {
        cfg.topk_renormalize = true;
    }
    match (flags.pbar, flags.ema_momentum) {
        (Some(PbarArg::Batch), Some(_)) => {
            return Err(CliError::Usage("--ema-momentum requires --pbar ema".into()));
        }
        (Some(PbarArg::Batch), None) => cfg.pbar_mode = PbarMode::BatchMean,
        (Some(PbarArg::Ema), m) => {
            cfg.pbar_mode = PbarMode::Ema { momentum: m.unwrap_or(DEFAULT_EMA_MOMENTUM) };
        }
        (None, Some(m)) => match cfg.pbar_mode {
            PbarMode::Ema { .. } => cfg.pbar_mode = PbarMode::Ema { momentum: m },
            PbarMode::BatchMean => return Err(CliError::Usage("--ema-momentum requires --pbar ema".into())),
        },
        (None, None) => {}
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let dataset = args
        .dataset
        .clone()
        .or(f_dataset)
        .ok_or_else(|| CliError::Usage("missing --dataset (flag or config file)".into()))?;
    let out = args
        .out
        .clone()
        .or(f_out)
        .ok_or_else(|| CliError::Usage("missing --out (flag or config file)".into()))?;
    Ok(RunConfig {
        train: cfg,
        dataset,
        eval_dataset: args.eval_dataset.clone().or(f_eval),
        resume: args.resume.clone().or(f_resume),
        out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_keys() {
        let f = parse_file(r#"{"learning_rate": 1e-6, "dataset": "d.bin", "k": 2}"#).unwrap();
        assert_eq!(f.train.learning_rate, 1e-6);
        assert_eq!(f.train.k, 2);
        assert_eq!(f.train.epochs, 15);
        assert_eq!(f.paths[0], Some(PathBuf::from("d.bin")));
        assert!(parse_file(r#"{"learning_rat": 1e-6}"#).unwrap_err().contains("learning_rat"));
        assert!(parse_file(r#"{"epochs": "many"}"#).is_err());
        assert!(parse_file(r#"{"out": 3}"#).is_err());
    }
}
