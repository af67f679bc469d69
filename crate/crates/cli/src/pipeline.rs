//! The benchmark lifecycle: generate → train → evaluate → report, and the
//! data-efficiency sweep.
//!
//! Output layout under the root directory:
//!
//! ```text
//! data/<system>/<chart>/<split>/          meta.json, states.f64
//! runs/<system>__<model>__seed<k>/        model.*, epoch<k>.*, loss.csv
//! reports/T<t>/<system>__<model>__seed<k>.{csv,json}
//! reports/oracle/T<t>/…                   analytic-model baselines
//! reports/summary.csv
//! sweep/n<size>/runs/…, sweep/n<size>/reports/…, sweep/sweep.csv
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ecbench_core::datagen::{generate_dataset, DatasetMeta, Split, TrajectoryDataset};
use ecbench_core::evalkit::{evaluate, report_stem, EvalReport};
use ecbench_core::mechanics::{Chart, System};
use ecbench_core::models::{read_checkpoint, Model, ModelKind};
use ecbench_core::training::{train_epochs, TrainConfig, TrainRun, FINAL_STEM, LOSS_CSV};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, SystemBlock};
use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Written,
    UpToDate,
    Resumed,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Written => "written",
            Status::UpToDate => "up to date",
            Status::Resumed => "resumed",
        })
    }
}

/// A file or directory the command produced or confirmed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub path: PathBuf,
    pub status: Status,
}

/// Execution options shared by every command.
#[derive(Debug, Clone, Copy)]
pub struct Options {
    pub parallel: bool,
    pub force: bool,
}

/// Restricts a command to some systems, model kinds and seeds.
#[derive(Debug, Clone, Default)]
pub struct Selection {
    pub system: Option<String>,
    pub model: Option<ModelKind>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunId {
    pub system: String,
    pub kind: ModelKind,
    pub seed: u64,
}

impl RunId {
    pub fn stem(&self) -> String {
        report_stem(&self.system, self.kind, self.seed)
    }
}

pub fn dataset_dir(root: &Path, system: &str, chart: Chart, split: Split) -> PathBuf {
    root.join("data").join(system).join(chart.name()).join(split.name())
}

pub fn run_dir(root: &Path, run: &RunId) -> PathBuf {
    root.join("runs").join(run.stem())
}

pub fn report_dir(root: &Path, t_eval: usize) -> PathBuf {
    root.join("reports").join(format!("T{t_eval}"))
}

fn sweep_dir(root: &Path, size: usize) -> PathBuf {
    root.join("sweep").join(format!("n{size}"))
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).display().to_string()
}

fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).with_context(|| format!("clearing {}", dir.display()))?;
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn read_meta(dir: &Path) -> Option<DatasetMeta> {
    let text = fs::read_to_string(dir.join("meta.json")).ok()?;
    serde_json::from_str(&text).ok()
}

impl Selection {
    fn runs(&self, cfg: &ExperimentConfig, kinds: &[ModelKind]) -> Result<Vec<RunId>> {
        if let Some(s) = &self.system {
            cfg.system(s)?;
        }
        if let Some(k) = self.model {
            if !kinds.contains(&k) {
                return Err(ConfigError(format!("model {k} is not among the configured kinds")).into());
            }
        }
        if let Some(seed) = self.seed {
            if !cfg.model.seeds.contains(&seed) {
                return Err(ConfigError(format!("seed {seed} is not among the configured seeds")).into());
            }
        }
        let mut out = Vec::new();
        for b in cfg.systems.iter().filter(|b| self.system.as_ref().is_none_or(|s| *s == b.name)) {
            for &kind in kinds.iter().filter(|&&k| self.model.is_none_or(|m| m == k)) {
                for &seed in cfg.model.seeds.iter().filter(|&&s| self.seed.is_none_or(|x| x == s)) {
                    out.push(RunId { system: b.name.clone(), kind, seed });
                }
            }
        }
        Ok(out)
    }
}

/// Writes every dataset the config calls for. Datasets whose metadata
/// already matches are left untouched; a mismatching one is an error
/// unless `force` is set.
pub fn generate(cfg: &ExperimentConfig, root: &Path, opts: Options) -> Result<Vec<Output>> {
    let mut out = Vec::new();
    for b in &cfg.systems {
        let sys = b.build()?;
        for chart in cfg.charts() {
            for split in [Split::Train, Split::Test] {
                let dir = dataset_dir(root, &b.name, chart, split);
                let spec = cfg.dataset_spec(b, &sys, chart, split);
                let want = spec.meta(&sys);
                if dir.exists() {
                    match read_meta(&dir) {
                        Some(m) if m == want && TrajectoryDataset::read(&dir).is_ok() => {
                            out.push(Output { path: dir, status: Status::UpToDate });
                            continue;
                        }
                        _ if !opts.force => {
                            return Err(ConfigError(format!(
                                "{} holds a dataset that does not match the config; pass --force to replace it",
                                dir.display()
                            ))
                            .into());
                        }
                        _ => {}
                    }
                }
                let ds = generate_dataset(&sys, &spec).with_context(|| format!("generating {}", dir.display()))?;
                fresh_dir(&dir)?;
                ds.write(&dir).with_context(|| format!("writing {}", dir.display()))?;
                out.push(Output { path: dir, status: Status::Written });
            }
        }
    }
    Ok(out)
}

/// Reads a generated dataset and checks it still matches the config.
pub fn load_dataset(cfg: &ExperimentConfig, root: &Path, b: &SystemBlock, sys: &System, chart: Chart, split: Split) -> Result<TrajectoryDataset> {
    let dir = dataset_dir(root, &b.name, chart, split);
    if !dir.join("meta.json").exists() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no dataset at {}; run `ecbench generate` first", dir.display()),
        )
        .into());
    }
    let ds = TrajectoryDataset::read(&dir).with_context(|| format!("reading {}", dir.display()))?;
    if ds.meta != cfg.dataset_spec(b, sys, chart, split).meta(sys) {
        return Err(ConfigError(format!(
            "dataset at {} was generated with different settings; rerun `ecbench generate --force`",
            dir.display()
        ))
        .into());
    }
    Ok(ds)
}

fn same_settings(a: &TrainConfig, b: &TrainConfig) -> bool {
    TrainConfig { epochs: 0, parallel: false, ..a.clone() } == TrainConfig { epochs: 0, parallel: false, ..b.clone() }
}

fn latest_epoch_checkpoint(dir: &Path) -> Option<(usize, String)> {
    fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let k: usize = name.strip_prefix("epoch")?.strip_suffix(".train.json")?.parse().ok()?;
            Some((k, format!("epoch{k}")))
        })
        .max()
}

fn rewrite_loss_csv(dir: &Path, run: &TrainRun) -> Result<()> {
    let mut s = String::from("epoch,mean_loss,skipped_batches,wall_ms\n");
    for r in &run.history {
        s += &format!("{},{},{},{}\n", r.epoch, r.mean_loss, r.skipped_batches, r.wall_ms);
    }
    fs::write(dir.join(LOSS_CSV), s)?;
    Ok(())
}

/// Trains one model into `dir`, reusing or resuming what is already there.
pub fn train_into(dir: &Path, model: &Model, data: &TrajectoryDataset, tc: &TrainConfig, resume: bool, force: bool) -> Result<Status> {
    let existing = if force {
        None
    } else if dir.join(format!("{FINAL_STEM}.train.json")).exists() {
        Some(FINAL_STEM.to_string())
    } else if let Some((_, stem)) = latest_epoch_checkpoint(dir) {
        if !resume {
            return Err(ConfigError(format!(
                "{} holds an unfinished run; pass --resume to continue it or --force to restart",
                dir.display()
            ))
            .into());
        }
        Some(stem)
    } else {
        None
    };
    if let Some(stem) = existing {
        let (saved_model, saved_cfg, mut run) = TrainRun::load(dir, &stem).with_context(|| format!("loading {}", dir.display()))?;
        let compatible = saved_model == *model && same_settings(&saved_cfg, tc);
        if compatible && stem == FINAL_STEM && run.epoch == tc.epochs {
            return Ok(Status::UpToDate);
        }
        if !(resume && compatible && run.epoch <= tc.epochs) {
            return Err(ConfigError(format!(
                "{} holds a run with different settings; pass --resume to extend it or --force to restart",
                dir.display()
            ))
            .into());
        }
        rewrite_loss_csv(dir, &run)?;
        let remaining = tc.epochs - run.epoch;
        train_epochs(model, data, tc, &mut run, remaining, Some(dir))?;
        run.save(dir, FINAL_STEM, model, tc)?;
        return Ok(Status::Resumed);
    }
    fresh_dir(dir)?;
    let mut run = TrainRun::new(model.init_params());
    train_epochs(model, data, tc, &mut run, tc.epochs, Some(dir))?;
    run.save(dir, FINAL_STEM, model, tc)?;
    if tc.epochs == 0 {
        fs::write(dir.join(LOSS_CSV), "epoch,mean_loss,skipped_batches,wall_ms\n")?;
    }
    Ok(Status::Written)
}

/// Trains every selected (system, model, seed) run.
pub fn train(cfg: &ExperimentConfig, root: &Path, sel: &Selection, epochs: Option<usize>, resume: bool, opts: Options) -> Result<Vec<Output>> {
    let runs = sel.runs(cfg, &cfg.model.kinds)?;
    let job = |run: &RunId| -> Result<Output> {
        let b = cfg.system(&run.system)?;
        let sys = b.build()?;
        let data = load_dataset(cfg, root, b, &sys, run.kind.data_chart(), Split::Train)?;
        let model = Model::new(run.kind, sys, cfg.hyper(run.seed))?;
        let mut tc = cfg.train_config(run.seed, opts.parallel);
        if let Some(e) = epochs {
            tc.epochs = e;
        }
        let dir = run_dir(root, run);
        let status = train_into(&dir, &model, &data, &tc, resume, opts.force).with_context(|| format!("training {}", run.stem()))?;
        Ok(Output { path: dir, status })
    };
    if opts.parallel {
        runs.par_iter().map(job).collect()
    } else {
        runs.iter().map(job).collect()
    }
}

fn write_reports(
    report: &mut EvalReport,
    root: &Path,
    out_dir: &Path,
    stem: &str,
    checkpoint: Option<&Path>,
    dataset: &Path,
    train_seed: Option<u64>,
) -> Result<Vec<Output>> {
    report.meta.checkpoint = checkpoint.map(|c| rel(root, c));
    report.meta.dataset = Some(rel(root, dataset));
    report.meta.train_seed = train_seed;
    let (csv, json) = report.write(out_dir, stem)?;
    Ok(vec![Output { path: csv, status: Status::Written }, Output { path: json, status: Status::Written }])
}

/// Evaluates trained runs at every configured horizon.
pub fn evaluate_runs(cfg: &ExperimentConfig, root: &Path, sel: &Selection, t_evals: &[usize], opts: Options) -> Result<Vec<Output>> {
    let runs = sel.runs(cfg, &cfg.model.kinds)?;
    let job = |run: &RunId| -> Result<Vec<Output>> {
        let dir = run_dir(root, run);
        evaluate_checkpoint(cfg, root, &dir, t_evals, opts).with_context(|| format!("evaluating {}", run.stem()))
    };
    let nested: Vec<Vec<Output>> = if opts.parallel {
        runs.par_iter().map(job).collect::<Result<_>>()?
    } else {
        runs.iter().map(job).collect::<Result<_>>()?
    };
    Ok(nested.concat())
}

/// Evaluates the final checkpoint in `dir` on its system's test set.
pub fn evaluate_checkpoint(cfg: &ExperimentConfig, root: &Path, dir: &Path, t_evals: &[usize], opts: Options) -> Result<Vec<Output>> {
    if !dir.join(format!("{FINAL_STEM}.json")).exists() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no checkpoint in {}; run `ecbench train` first", dir.display()),
        )
        .into());
    }
    let ck = read_checkpoint(dir, FINAL_STEM)?;
    let b = cfg.system(&ck.meta.system_name)?;
    let sys = b.build()?;
    if sys.config() != ck.meta.system {
        return Err(ConfigError(format!("checkpoint {} was trained on a different {}", dir.display(), b.name)).into());
    }
    let chart = ck.model.data_chart();
    let data = load_dataset(cfg, root, b, &sys, chart, Split::Test)?;
    let data_dir = dataset_dir(root, &b.name, chart, Split::Test);
    let stem = report_stem(&b.name, ck.meta.kind, ck.meta.hyper.seed);
    let mut out = Vec::new();
    for &t in t_evals {
        let mut rep = evaluate(&ck.model, &ck.params, &data, t, opts.parallel)?;
        out.extend(write_reports(&mut rep, root, &report_dir(root, t), &stem, Some(dir), &data_dir, Some(ck.meta.seed))?);
    }
    Ok(out)
}

/// Scores the analytic model of each structured kind, a floor for the
/// learned models.
pub fn evaluate_oracles(cfg: &ExperimentConfig, root: &Path, sel: &Selection, t_evals: &[usize], opts: Options) -> Result<Vec<Output>> {
    let kinds: Vec<ModelKind> = cfg.model.kinds.iter().copied().filter(|k| k.is_structured()).collect();
    if kinds.is_empty() {
        return Err(ConfigError("oracle evaluation needs a structured model kind in model.kinds".into()).into());
    }
    let mut out = Vec::new();
    for b in cfg.systems.iter().filter(|b| sel.system.as_ref().is_none_or(|s| *s == b.name)) {
        let sys = b.build()?;
        for &kind in kinds.iter().filter(|&&k| sel.model.is_none_or(|m| m == k)) {
            let (model, params) = Model::with_true_parts(kind, sys.clone())?;
            let data = load_dataset(cfg, root, b, &sys, kind.data_chart(), Split::Test)?;
            let data_dir = dataset_dir(root, &b.name, kind.data_chart(), Split::Test);
            for &t in t_evals {
                let mut rep = evaluate(&model, &params, &data, t, opts.parallel)?;
                let dir = root.join("reports").join("oracle").join(format!("T{t}"));
                out.extend(write_reports(&mut rep, root, &dir, &report_stem(&b.name, kind, 0), None, &data_dir, None)?);
            }
        }
    }
    Ok(out)
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub system: String,
    pub model: ModelKind,
    pub seed: u64,
    pub size: usize,
    pub mean: f64,
    pub median: f64,
    pub diverged: usize,
}

pub const SWEEP_HEADER: &str = "system,model,seed,size,trajectory_rel_err_mean,trajectory_rel_err_median,diverged";

/// Trains and evaluates every sweep kind on each training-set prefix.
pub fn sweep(cfg: &ExperimentConfig, root: &Path, resume: bool, opts: Options) -> Result<(Vec<Output>, Vec<SweepRow>)> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| ConfigError("the config has no [sweep] block".into()))?;
    let mut out = generate(cfg, root, Options { force: false, ..opts })?;
    let kinds = sw.kinds.clone().unwrap_or_else(|| cfg.model.kinds.clone());
    let runs = Selection::default().runs(cfg, &kinds)?;
    let points: Vec<(usize, RunId)> = sw.sizes.iter().flat_map(|&n| runs.iter().map(move |r| (n, r.clone()))).collect();
    let job = |(size, run): &(usize, RunId)| -> Result<(Vec<Output>, SweepRow)> {
        let b = cfg.system(&run.system)?;
        let sys = b.build()?;
        let chart = run.kind.data_chart();
        let data = load_dataset(cfg, root, b, &sys, chart, Split::Train)?.truncated(*size);
        let test = load_dataset(cfg, root, b, &sys, chart, Split::Test)?;
        let model = Model::new(run.kind, sys, cfg.hyper(run.seed))?;
        let tc = cfg.train_config(run.seed, opts.parallel);
        let base = sweep_dir(root, *size);
        let dir = base.join("runs").join(run.stem());
        let status = train_into(&dir, &model, &data, &tc, resume, opts.force)?;
        let ck = read_checkpoint(&dir, FINAL_STEM)?;
        let mut rep = evaluate(&ck.model, &ck.params, &test, sw.t_eval, opts.parallel)?;
        let data_dir = dataset_dir(root, &b.name, chart, Split::Test);
        let mut files = vec![Output { path: dir.clone(), status }];
        files.extend(write_reports(&mut rep, root, &base.join("reports"), &run.stem(), Some(&dir), &data_dir, Some(tc.seed))?);
        let row = SweepRow {
            system: run.system.clone(),
            model: run.kind,
            seed: run.seed,
            size: *size,
            mean: rep.trajectory_rel_err_mean,
            median: rep.trajectory_rel_err_median,
            diverged: rep.diverged.len(),
        };
        Ok((files, row))
    };
    let with_point = |p: &(usize, RunId)| job(p).with_context(|| format!("sweep point n={}, {}", p.0, p.1.stem()));
    let results: Vec<(Vec<Output>, SweepRow)> = if opts.parallel {
        points.par_iter().map(with_point).collect::<Result<_>>()?
    } else {
        points.iter().map(with_point).collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    for (files, row) in results {
        out.extend(files);
        rows.push(row);
    }
    let mut csv = format!("{SWEEP_HEADER}\n");
    for r in &rows {
        csv += &format!("{},{},{},{},{:e},{:e},{}\n", r.system, r.model, r.seed, r.size, r.mean, r.median, r.diverged);
    }
    let path = root.join("sweep").join("sweep.csv");
    fs::write(&path, csv)?;
    out.push(Output { path, status: Status::Written });
    Ok((out, rows))
}

pub const SUMMARY_HEADER: &str = "t_eval,system,model,seed,evaluated,diverged,trajectory_rel_err_mean,trajectory_rel_err_std,trajectory_rel_err_median,trajectory_rel_err_log_mean,trajectory_rel_err_log_std";

/// Joins every report under `reports/T*/` into `reports/summary.csv`.
pub fn report(root: &Path) -> Result<(Output, Vec<EvalReport>)> {
    let base = root.join("reports");
    let mut reports = Vec::new();
    let mut dirs: Vec<PathBuf> = fs::read_dir(&base)
        .with_context(|| format!("no reports under {}; run `ecbench evaluate` first", base.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with('T')))
        .collect();
    dirs.sort();
    for d in dirs {
        let mut files: Vec<PathBuf> = fs::read_dir(&d)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        for f in files {
            reports.push(EvalReport::read_json(&f).with_context(|| format!("reading {}", f.display()))?);
        }
    }
    reports.sort_by(|a, b| {
        (a.t_eval, &a.system, ModelKind::ALL.iter().position(|k| *k == a.model), a.meta.model_seed).cmp(&(
            b.t_eval,
            &b.system,
            ModelKind::ALL.iter().position(|k| *k == b.model),
            b.meta.model_seed,
        ))
    });
    let mut csv = format!("{SUMMARY_HEADER}\n");
    for r in &reports {
        csv += &format!(
            "{},{},{},{},{},{},{:e},{:e},{:e},{:e},{:e}\n",
            r.t_eval,
            r.system,
            r.model,
            r.meta.model_seed,
            r.evaluated,
            r.diverged.len(),
            r.trajectory_rel_err_mean,
            r.trajectory_rel_err_std,
            r.trajectory_rel_err_median,
            r.trajectory_rel_err_log_mean,
            r.trajectory_rel_err_log_std
        );
    }
    let path = base.join("summary.csv");
    fs::write(&path, csv)?;
    Ok((Output { path, status: Status::Written }, reports))
}
