//! Model checkpoints: a `.params` file plus a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Model, ModelHyper, ModelKind};
use crate::diffcore::{read_params, write_params};
use crate::error::{Error, Result};
use crate::mechanics::SystemConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub kind: ModelKind,
    pub system_name: String,
    pub system: SystemConfig,
    pub hyper: ModelHyper,
    pub seed: u64,
    pub epoch: usize,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: Model,
    pub params: Vec<f64>,
}

fn paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.params")), dir.join(format!("{stem}.json")))
}

/// Writes `<dir>/<stem>.params` and `<dir>/<stem>.json`.
pub fn write_checkpoint(dir: &Path, stem: &str, model: &Model, params: &[f64], seed: u64, epoch: usize) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (p, j) = paths(dir, stem);
    write_params(&p, &model.params_header(), params)?;
    let meta = CheckpointMeta {
        kind: model.kind(),
        system_name: model.system().name(),
        system: model.system().config(),
        hyper: model.hyper().clone(),
        seed,
        epoch,
    };
    fs::write(j, serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn read_checkpoint(dir: &Path, stem: &str) -> Result<Checkpoint> {
    let (p, j) = paths(dir, stem);
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(&j)?)?;
    let model = Model::new(meta.kind, meta.system.build()?, meta.hyper.clone())?;
    let (header, params) = read_params(&p)?;
    if header != model.params_header() {
        return Err(Error::Format {
            path: p.display().to_string(),
            reason: format!("parameter layout does not match a {} model", meta.kind),
        });
    }
    Ok(Checkpoint { meta, model, params })
}
