//! Snippet training: L1 loss through differentiable RK4 rollouts, AdamW.
//!
//! Every snippet in a batch gets its own tape. Per-snippet gradients are
//! combined by a fixed pairwise tree, so the summed gradient does not depend
//! on whether the snippets were processed in parallel.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{sample_snippets_with, Snippet, TrajectoryDataset};
use crate::diffcore::{init_rng, read_params, write_params, BlockEntry, ParamsHeader, Scalar, Tape};
use crate::error::{Error, Result};
use crate::models::{read_checkpoint, write_checkpoint, Model};

/// Offset added to the epoch index to pick the snippet-sampling stream.
const SAMPLING_STREAM: u64 = 1 << 32;

pub const LOSS_CSV: &str = "loss.csv";
pub const FINAL_STEM: &str = "model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub snippet_len: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (0: only at the end).
    pub checkpoint_every: usize,
    /// Evaluate the snippets of a batch on the rayon pool.
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 1e-3,
            batch_size: 32,
            snippet_len: 5,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            checkpoint_every: 0,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [("learning_rate", self.learning_rate), ("eps", self.eps)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.snippet_len < 2 {
            return bad(format!("snippet_len must be at least 2, got {}", self.snippet_len));
        }
        Ok(())
    }
}

/// `Σ_t ‖ŝ_t − s_t‖₁` over matching rows.
pub fn l1_snippet_loss<S: Scalar>(pred: &[Vec<S>], target: &[&[f64]]) -> Result<S> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!("{} predicted rows for {} targets", pred.len(), target.len())));
    }
    let mut loss = S::zero();
    for (p, t) in pred.iter().zip(target) {
        if p.len() != t.len() {
            return Err(Error::Shape(format!("row of {} against target of {}", p.len(), t.len())));
        }
        for (&a, &b) in p.iter().zip(t.iter()) {
            loss += (a - b).abs();
        }
    }
    Ok(loss)
}

/// AdamW moments and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamW {
    pub fn new(n: usize) -> Self {
        AdamW { step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    /// One decoupled-weight-decay update. `epoch` only labels errors.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig, epoch: usize) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "{} parameters, {} gradients, {} moments",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::TrainingDivergence {
                epoch,
                reason: format!("gradient component {i} is {}", grads[i]),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= cfg.learning_rate * (mh / (vh.sqrt() + cfg.eps) + cfg.weight_decay * params[i]);
        }
        Ok(())
    }

    fn header(&self) -> ParamsHeader {
        let n = self.m.len();
        let mut h = ParamsHeader::new(2 * n);
        h.blocks = vec![
            BlockEntry { name: "adam_m".into(), offset: 0, len: n },
            BlockEntry { name: "adam_v".into(), offset: n, len: n },
        ];
        h
    }
}

/// Loss and parameter gradient of one snippet, on a private tape.
pub fn snippet_loss_and_gradient(model: &Model, params: &[f64], rows: &[&[f64]], dt: f64) -> Result<(f64, Vec<f64>)> {
    if rows.len() < 2 {
        return Err(Error::Config("a snippet needs at least two states".into()));
    }
    let tape = Tape::new();
    let p = tape.vars(params);
    let s0: Vec<_> = rows[0].iter().map(|&v| Scalar::cst(v)).collect();
    let pred = model.rollout(&p, &s0, dt, rows.len() - 1)?;
    let loss = l1_snippet_loss(&pred, &rows[1..])?;
    let grads = tape.backward(&loss);
    Ok((loss.value(), grads.wrt_all(&p)))
}

/// Mean snippet loss over a batch and its gradient.
pub fn batch_loss_and_gradient(
    model: &Model,
    params: &[f64],
    data: &TrajectoryDataset,
    batch: &[Snippet],
    parallel: bool,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let one = |sn: &Snippet| snippet_loss_and_gradient(model, params, &sn.states(data), data.meta.dt);
    let parts: Vec<(f64, Vec<f64>)> = if parallel {
        batch.par_iter().map(one).collect::<Result<_>>()?
    } else {
        batch.iter().map(one).collect::<Result<_>>()?
    };
    let (losses, grads): (Vec<f64>, Vec<Vec<f64>>) = parts.into_iter().unzip();
    let scale = 1.0 / batch.len() as f64;
    let loss = pairwise_sum(losses.into_iter().map(|l| vec![l]).collect())[0] * scale;
    let mut g = pairwise_sum(grads);
    g.iter_mut().for_each(|v| *v *= scale);
    Ok((loss, g))
}

/// Sums vectors by combining neighbours level by level.
fn pairwise_sum(mut level: Vec<Vec<f64>>) -> Vec<f64> {
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(mut a) = it.next() {
            if let Some(b) = it.next() {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            }
            next.push(a);
        }
        level = next;
    }
    level.pop().unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the batches that were not skipped; NaN if all were.
    pub mean_loss: f64,
    pub skipped_batches: usize,
    pub wall_ms: u128,
}

/// Training progress: parameters, optimizer state and history so far.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub params: Vec<f64>,
    pub optimizer: AdamW,
    /// Epochs completed.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Serialize, Deserialize)]
struct TrainSidecar {
    config: TrainConfig,
    epoch: usize,
    adam_step: u64,
    history: Vec<EpochRecord>,
}

impl TrainRun {
    pub fn new(params: Vec<f64>) -> Self {
        let n = params.len();
        TrainRun { params, optimizer: AdamW::new(n), epoch: 0, history: Vec::new() }
    }

    /// Writes the model checkpoint, the optimizer moments (`<stem>.optim`)
    /// and the run state (`<stem>.train.json`).
    pub fn save(&self, dir: &Path, stem: &str, model: &Model, config: &TrainConfig) -> Result<()> {
        write_checkpoint(dir, stem, model, &self.params, config.seed, self.epoch)?;
        let moments: Vec<f64> = self.optimizer.m.iter().chain(&self.optimizer.v).copied().collect();
        write_params(&dir.join(format!("{stem}.optim")), &self.optimizer.header(), &moments)?;
        let side = TrainSidecar {
            config: config.clone(),
            epoch: self.epoch,
            adam_step: self.optimizer.step,
            history: self.history.clone(),
        };
        fs::write(dir.join(format!("{stem}.train.json")), serde_json::to_string_pretty(&side)? + "\n")?;
        Ok(())
    }

    /// Restores a run written by [`TrainRun::save`], with its model and config.
    pub fn load(dir: &Path, stem: &str) -> Result<(Model, TrainConfig, TrainRun)> {
        let ck = read_checkpoint(dir, stem)?;
        let path = dir.join(format!("{stem}.optim"));
        let (header, moments) = read_params(&path)?;
        let n = ck.params.len();
        if header.count != 2 * n {
            return Err(Error::Format {
                path: path.display().to_string(),
                reason: format!("{} moments for {n} parameters", header.count),
            });
        }
        let side: TrainSidecar = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.train.json")))?)?;
        let optimizer = AdamW { step: side.adam_step, m: moments[..n].to_vec(), v: moments[n..].to_vec() };
        let run = TrainRun { params: ck.params, optimizer, epoch: side.epoch, history: side.history };
        Ok((ck.model, side.config, run))
    }
}

fn check_data(model: &Model, data: &TrajectoryDataset, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if data.meta.chart != model.data_chart() {
        return Err(Error::Config(format!(
            "{} trains on {:?} data, dataset is {:?}",
            model.kind(),
            model.data_chart(),
            data.meta.chart
        )));
    }
    if data.dim() != model.state_dim() || data.meta.system != model.system().config() {
        return Err(Error::Config(format!(
            "dataset describes {} but the model was built for {}",
            data.meta.system_name,
            model.system().name()
        )));
    }
    if data.count() == 0 || data.length() < config.snippet_len {
        return Err(Error::Config(format!(
            "dataset of {} trajectories of length {} cannot supply snippets of length {}",
            data.count(),
            data.length(),
            config.snippet_len
        )));
    }
    Ok(())
}

fn append_loss_row(dir: &Path, rec: &EpochRecord) -> Result<()> {
    let path = dir.join(LOSS_CSV);
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "epoch,mean_loss,skipped_batches,wall_ms")?;
    }
    writeln!(f, "{},{},{},{}", rec.epoch, rec.mean_loss, rec.skipped_batches, rec.wall_ms)?;
    Ok(())
}

/// Runs `epochs` further epochs on `run`. One epoch is
/// `⌈count / batch_size⌉` batches of snippets drawn with replacement.
///
/// With an output directory, every epoch is appended to `loss.csv` and
/// checkpoints are written at the configured cadence as `epoch<k>`.
pub fn train_epochs(
    model: &Model,
    data: &TrajectoryDataset,
    config: &TrainConfig,
    run: &mut TrainRun,
    epochs: usize,
    out: Option<&Path>,
) -> Result<()> {
    check_data(model, data, config)?;
    if run.params.len() != model.num_params() {
        return Err(Error::Shape(format!("{} parameters for a model of {}", run.params.len(), model.num_params())));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let batches = data.count().div_ceil(config.batch_size);
    for _ in 0..epochs {
        let epoch = run.epoch + 1;
        let started = Instant::now();
        let mut rng = init_rng(config.seed, SAMPLING_STREAM + epoch as u64);
        let mut losses = Vec::with_capacity(batches);
        let mut skipped = 0;
        for _ in 0..batches {
            let batch = sample_snippets_with(data, config.snippet_len, config.batch_size, &mut rng)?;
            match batch_loss_and_gradient(model, &run.params, data, &batch, config.parallel) {
                Ok((loss, grads)) => {
                    run.optimizer.update(&mut run.params, &grads, config, epoch)?;
                    losses.push(loss);
                }
                Err(e) if e.is_numerical() => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        let mean_loss = if losses.is_empty() {
            f64::NAN
        } else {
            losses.iter().sum::<f64>() / losses.len() as f64
        };
        let rec = EpochRecord { epoch, mean_loss, skipped_batches: skipped, wall_ms: started.elapsed().as_millis() };
        run.epoch = epoch;
        run.history.push(rec.clone());
        if let Some(dir) = out {
            append_loss_row(dir, &rec)?;
            if config.checkpoint_every > 0 && epoch.is_multiple_of(config.checkpoint_every) {
                run.save(dir, &format!("epoch{epoch}"), model, config)?;
            }
        }
    }
    Ok(())
}

/// Trains from `params` for `config.epochs` epochs. With an output
/// directory the final state is saved as `model`.
pub fn train(
    model: &Model,
    params: Vec<f64>,
    data: &TrajectoryDataset,
    config: &TrainConfig,
    out: Option<&Path>,
) -> Result<TrainRun> {
    let mut run = TrainRun::new(params);
    train_epochs(model, data, config, &mut run, config.epochs, out)?;
    if let Some(dir) = out {
        run.save(dir, FINAL_STEM, model, config)?;
    }
    Ok(run)
}
