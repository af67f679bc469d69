//! Test-set metrics: per-step relative error, trajectory relative error and
//! absolute error in true energy, aggregated over trajectories.
//!
//! Error curves are aggregated in log space. Trajectories whose rollout
//! leaves the finite numbers are counted as diverged and left out of every
//! aggregate, so all curves are computed over the same set.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::mechanics::{Chart, System};
use crate::models::{Model, ModelKind};

/// Relative errors are floored here before taking logs, so an exact match
/// contributes ln(1e-16) rather than −∞.
pub const LOG_FLOOR: f64 = 1e-16;

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖ŝ − s‖₂ / ‖s‖₂`, or `None` when `s` is the zero vector.
pub fn relative_error(pred: &[f64], truth: &[f64]) -> Result<Option<f64>> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("state of {} against {}", pred.len(), truth.len())));
    }
    let d = norm(truth.iter().copied());
    if d == 0.0 {
        return Ok(None);
    }
    Ok(Some(norm(pred.iter().zip(truth).map(|(a, b)| a - b)) / d))
}

/// Sum of per-step relative errors; zero-norm steps are skipped.
pub fn trajectory_relative_error<P: AsRef<[f64]>, T: AsRef<[f64]>>(pred: &[P], truth: &[T]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("trajectory of {} steps against {}", pred.len(), truth.len())));
    }
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        sum += relative_error(p.as_ref(), t.as_ref())?.unwrap_or(0.0);
    }
    Ok(sum)
}

/// `|E(ŝ_t) − E₀|` for each state, with `E` the system's true energy.
pub fn energy_abs_error<P: AsRef<[f64]>>(system: &System, chart: Chart, states: &[P], e0: f64) -> Result<Vec<f64>> {
    let d = system.state_dim(chart);
    states
        .iter()
        .map(|s| {
            let s = s.as_ref();
            if s.len() != d {
                return Err(Error::Config(format!(
                    "{}-component state is not a {} {} state",
                    s.len(),
                    system.name(),
                    chart.name()
                )));
            }
            Ok((system.energy(chart, s) - e0).abs())
        })
        .collect()
}

/// Metrics of one test trajectory over `t = 1 … T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMetrics {
    /// `None` where the ground truth is the zero vector.
    pub rel: Vec<Option<f64>>,
    pub trajectory_rel: f64,
    pub energy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub t: usize,
    pub mean_log_rel_err: f64,
    pub std_log_rel_err: f64,
    pub mean_energy_abs_err: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub model_seed: u64,
    pub train_seed: Option<u64>,
    pub checkpoint: Option<String>,
    pub dataset: Option<String>,
    pub dataset_seed: u64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: ModelKind,
    pub system: String,
    pub t_eval: usize,
    pub evaluated: usize,
    /// Indices of test trajectories whose rollout failed numerically.
    pub diverged: Vec<usize>,
    /// Steps left out of the per-step statistics because `‖s_t‖ = 0`.
    pub excluded_points: usize,
    pub trajectory_rel_err_mean: f64,
    pub trajectory_rel_err_std: f64,
    pub trajectory_rel_err_median: f64,
    pub trajectory_rel_err_log_mean: f64,
    pub trajectory_rel_err_log_std: f64,
    pub curve: Vec<StepStats>,
    /// Trajectory relative error of each evaluated trajectory, in index order.
    pub per_trajectory: Vec<f64>,
    pub meta: ReportMeta,
}

/// Rolls the model out from the stored `s₀` of trajectory `i`.
pub fn evaluate_trajectory(model: &Model, params: &[f64], data: &TrajectoryDataset, i: usize, t_eval: usize) -> Result<TrajectoryMetrics> {
    let system = model.system();
    let s0 = data.state(i, 0);
    let pred = model.rollout::<f64>(params, s0, data.meta.dt, t_eval)?;
    let truth: Vec<&[f64]> = (1..=t_eval).map(|t| data.state(i, t)).collect();
    let rel = pred.iter().zip(&truth).map(|(p, s)| relative_error(p, s)).collect::<Result<Vec<_>>>()?;
    let trajectory_rel = rel.iter().map(|r| r.unwrap_or(0.0)).sum();
    let e0 = system.energy(data.meta.chart, s0);
    let energy = energy_abs_error(system, data.meta.chart, &pred, e0)?;
    Ok(TrajectoryMetrics { rel, trajectory_rel, energy })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt())
}

pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len() / 2;
    if s.len() % 2 == 1 {
        s[k]
    } else {
        0.5 * (s[k - 1] + s[k])
    }
}

/// Aggregates per-trajectory metrics; `results[i]` belongs to test trajectory `i`.
pub fn aggregate(model: ModelKind, system: &str, t_eval: usize, results: Vec<Result<TrajectoryMetrics>>) -> Result<EvalReport> {
    let mut kept = Vec::new();
    let mut diverged = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(m) => kept.push(m),
            Err(e) if e.is_numerical() => diverged.push(i),
            Err(e) => return Err(Error::Trajectory { index: i, source: Box::new(e) }),
        }
    }
    let mut excluded = 0;
    let curve = (0..t_eval)
        .map(|k| {
            let logs: Vec<f64> = kept.iter().filter_map(|m| m.rel[k]).map(|r| r.max(LOG_FLOOR).ln()).collect();
            excluded += kept.len() - logs.len();
            let (ml, sl) = mean_std(&logs);
            let energies: Vec<f64> = kept.iter().map(|m| m.energy[k]).collect();
            StepStats { t: k + 1, mean_log_rel_err: ml, std_log_rel_err: sl, mean_energy_abs_err: mean_std(&energies).0 }
        })
        .collect();
    let per: Vec<f64> = kept.iter().map(|m| m.trajectory_rel).collect();
    let logs: Vec<f64> = per.iter().map(|r| r.max(LOG_FLOOR).ln()).collect();
    let (mean, std) = mean_std(&per);
    let (log_mean, log_std) = mean_std(&logs);
    Ok(EvalReport {
        model,
        system: system.to_string(),
        t_eval,
        evaluated: kept.len(),
        diverged,
        excluded_points: excluded,
        trajectory_rel_err_mean: mean,
        trajectory_rel_err_std: std,
        trajectory_rel_err_median: median(&per),
        trajectory_rel_err_log_mean: log_mean,
        trajectory_rel_err_log_std: log_std,
        curve,
        per_trajectory: per,
        meta: ReportMeta::default(),
    })
}

/// Evaluates every test trajectory over `t_eval` steps.
pub fn evaluate(model: &Model, params: &[f64], data: &TrajectoryDataset, t_eval: usize, parallel: bool) -> Result<EvalReport> {
    if data.meta.chart != model.data_chart() {
        return Err(Error::Config(format!(
            "{} is evaluated on {} data, dataset is {}",
            model.kind(),
            model.data_chart().name(),
            data.meta.chart.name()
        )));
    }
    if data.meta.system != model.system().config() {
        return Err(Error::Config(format!(
            "dataset describes {} but the model was built for {}",
            data.meta.system_name,
            model.system().name()
        )));
    }
    if t_eval == 0 || t_eval >= data.length() {
        return Err(Error::Config(format!(
            "evaluation horizon {t_eval} must be in 1..{} for trajectories of length {}",
            data.length(),
            data.length()
        )));
    }
    if params.len() != model.num_params() {
        return Err(Error::Shape(format!("{} parameters for a model of {}", params.len(), model.num_params())));
    }
    let one = |i: usize| evaluate_trajectory(model, params, data, i, t_eval);
    let results: Vec<_> = if parallel {
        (0..data.count()).into_par_iter().map(one).collect()
    } else {
        (0..data.count()).map(one).collect()
    };
    let mut report = aggregate(model.kind(), &model.system().name(), t_eval, results)?;
    report.meta.model_seed = model.hyper().seed;
    report.meta.dataset_seed = data.meta.seed;
    report.meta.dt = data.meta.dt;
    Ok(report)
}

/// `<system>__<model>__seed<k>`, with the model name lower-cased.
pub fn report_stem(system: &str, model: ModelKind, seed: u64) -> String {
    format!("{system}__{}__seed{seed}", model.name().to_lowercase())
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,mean_log_rel_err,std_log_rel_err,mean_energy_abs_err\n");
        for r in &self.curve {
            s += &format!("{},{:e},{:e},{:e}\n", r.t, r.mean_log_rel_err, r.std_log_rel_err, r.mean_energy_abs_err);
        }
        s
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`; returns both paths.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        fs::write(&csv, self.to_csv())?;
        fs::write(&json, serde_json::to_string_pretty(self)? + "\n")?;
        Ok((csv, json))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
