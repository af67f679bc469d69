//! Experiment configuration: one TOML file fixes every tunable of a run.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ecbench_core::datagen::{default_substeps, DatasetSpec, InitialRanges, Split};
use ecbench_core::mechanics::{Chart, System, SystemConfig};
use ecbench_core::models::{Model, ModelHyper, ModelKind};
use ecbench_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output root; `--output` and `ECBENCH_OUTPUT` take precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(rename = "system")]
    pub systems: Vec<SystemBlock>,
    #[serde(default)]
    pub data: DataBlock,
    pub model: ModelBlock,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalBlock,
    #[serde(default)]
    pub sweep: Option<SweepBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    /// `pendulum<N>` or `gyroscope`.
    pub name: String,
    /// Physical parameters; the named system's defaults when absent.
    #[serde(default)]
    pub params: Option<SystemConfig>,
    /// Sampling interval; 0.03 for pendulums and 0.02 for the gyroscope by default.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Recorded steps per trajectory.
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_steps() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataBlock {
    pub train_count: usize,
    pub test_count: usize,
    pub noise: f64,
    pub seed: u64,
    pub substeps: usize,
    /// Charts to generate; by default those the model kinds train on.
    pub charts: Option<Vec<Chart>>,
    pub ranges: InitialRanges,
}

impl Default for DataBlock {
    fn default() -> Self {
        DataBlock {
            train_count: 800,
            test_count: 100,
            noise: 0.01,
            seed: 0,
            substeps: default_substeps(),
            charts: None,
            ranges: InitialRanges::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub kinds: Vec<ModelKind>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_eps")]
    pub mass_eps: f64,
    /// Run seeds. Seed `k` initialises the networks with `k` and samples
    /// training batches with `train.seed + k`.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_hidden() -> Vec<usize> {
    ModelHyper::default().hidden
}

fn default_eps() -> f64 {
    ModelHyper::default().mass_eps
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalBlock {
    pub t_eval: Vec<usize>,
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock { t_eval: vec![4, 20] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    /// Training-set sizes; each is a prefix of the generated training set.
    pub sizes: Vec<usize>,
    /// Model kinds to sweep; `model.kinds` when absent.
    #[serde(default)]
    pub kinds: Option<Vec<ModelKind>>,
    #[serde(default = "default_sweep_t")]
    pub t_eval: usize,
}

fn default_sweep_t() -> usize {
    4
}

impl SystemBlock {
    pub fn build(&self) -> Result<System> {
        let cfg = match &self.params {
            Some(p) => p.clone(),
            None => SystemConfig::by_name(&self.name)?,
        };
        let sys = cfg.build()?;
        if sys.name() != self.name {
            return Err(ConfigError(format!("system {:?} is given parameters of a {}", self.name, sys.name())).into());
        }
        Ok(sys)
    }

    pub fn dt(&self, sys: &System) -> f64 {
        self.dt.unwrap_or_else(|| sys.default_dt())
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| -> Result<()> { Err(ConfigError(m).into()) };
        if self.systems.is_empty() {
            return err("at least one [[system]] is required".into());
        }
        let mut names = BTreeSet::new();
        for b in &self.systems {
            let sys = b.build()?;
            if !names.insert(b.name.clone()) {
                return err(format!("system {} is listed twice", b.name));
            }
            for split in [Split::Train, Split::Test] {
                for chart in self.charts() {
                    self.dataset_spec(b, &sys, chart, split).validate()?;
                }
            }
            if self.train.snippet_len > b.steps + 1 {
                return err(format!("snippet_len {} exceeds the {} states of a {} trajectory", self.train.snippet_len, b.steps + 1, b.name));
            }
            for &t in self.eval.t_eval.iter().chain(self.sweep.as_ref().map(|s| &s.t_eval)) {
                if t == 0 || t > b.steps {
                    return err(format!("t_eval {t} must be in 1..={} for {}", b.steps, b.name));
                }
            }
        }
        if self.model.kinds.is_empty() {
            return err("model.kinds is empty".into());
        }
        if self.model.seeds.is_empty() {
            return err("model.seeds is empty".into());
        }
        if self.data.train_count == 0 || self.data.test_count == 0 {
            return err("train_count and test_count must be positive".into());
        }
        for b in &self.systems {
            let sys = b.build()?;
            for kind in self.all_kinds() {
                Model::new(kind, sys.clone(), self.hyper(0))?;
            }
        }
        self.train.validate()?;
        if let Some(s) = &self.sweep {
            if s.sizes.is_empty() {
                return err("sweep.sizes is empty".into());
            }
            if let Some(&n) = s.sizes.iter().find(|&&n| n == 0 || n > self.data.train_count) {
                return err(format!("sweep size {n} must be in 1..={} (data.train_count)", self.data.train_count));
            }
            if s.kinds.as_ref().is_some_and(|k| k.is_empty()) {
                return err("sweep.kinds is empty".into());
            }
        }
        Ok(())
    }

    /// Charts to generate, in a fixed order: those the model kinds train on
    /// plus any listed in `data.charts`.
    pub fn charts(&self) -> Vec<Chart> {
        let mut set: Vec<Chart> = self.all_kinds().iter().map(|k| k.data_chart()).collect();
        set.extend(self.data.charts.iter().flatten());
        set.sort_by_key(|c| c.name());
        set.dedup();
        set
    }

    /// Model kinds used by training and the sweep.
    pub fn all_kinds(&self) -> Vec<ModelKind> {
        let mut v = self.model.kinds.clone();
        if let Some(k) = self.sweep.as_ref().and_then(|s| s.kinds.clone()) {
            v.extend(k);
        }
        v.sort_by_key(|k| ModelKind::ALL.iter().position(|a| a == k));
        v.dedup();
        v
    }

    pub fn system(&self, name: &str) -> Result<&SystemBlock> {
        self.systems
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| ConfigError(format!("system {name:?} is not in the config")).into())
    }

    pub fn dataset_spec(&self, b: &SystemBlock, sys: &System, chart: Chart, split: Split) -> DatasetSpec {
        DatasetSpec {
            count: match split {
                Split::Train => self.data.train_count,
                Split::Test => self.data.test_count,
            },
            steps: b.steps,
            dt: b.dt(sys),
            noise: self.data.noise,
            seed: self.data.seed,
            chart,
            split,
            substeps: self.data.substeps,
            ranges: self.data.ranges.clone(),
        }
    }

    pub fn hyper(&self, seed: u64) -> ModelHyper {
        ModelHyper { hidden: self.model.hidden.clone(), mass_eps: self.model.mass_eps, seed }
    }

    pub fn train_config(&self, seed: u64, parallel: bool) -> TrainConfig {
        TrainConfig { seed: self.train.seed.wrapping_add(seed), parallel, ..self.train.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
output = "out"

[[system]]
name = "pendulum2"
dt = 0.025
steps = 50
params = { kind = "pendulum", masses = [1.0, 2.0], lengths = [1.0, 0.5], gravity = 9.8 }

[data]
train_count = 30
test_count = 7
noise = 0.02
seed = 5
substeps = 4
charts = ["angular", "cartesian"]
ranges = { pendulum_angle = [-1.0, 1.0], pendulum_rate = [-0.5, 0.5], gyro_tilt = [0.2, 1.0], gyro_angle = [-1.0, 1.0], gyro_spin = [2.0, 3.0], gyro_rate = [-0.1, 0.1] }

[model]
kinds = ["CLNN", "HNN-Angle"]
hidden = [16, 16]
mass_eps = 0.05
seeds = [3, 4]

[train]
epochs = 7
learning_rate = 0.002
batch_size = 8
snippet_len = 4
weight_decay = 0.0
beta1 = 0.8
beta2 = 0.99
eps = 1e-7
seed = 11
checkpoint_every = 2
parallel = false

[eval]
t_eval = [3, 9]

[sweep]
sizes = [10, 30]
kinds = ["CHNN"]
t_eval = 5
"#;

    #[test]
    fn every_tunable_reaches_the_library_types() {
        let c = ExperimentConfig::from_toml(FULL).unwrap();
        let b = &c.systems[0];
        let sys = b.build().unwrap();
        assert_eq!(sys.config(), SystemConfig::Pendulum(ecbench_core::mechanics::PendulumParams {
            masses: vec![1.0, 2.0],
            lengths: vec![1.0, 0.5],
            gravity: 9.8,
        }));
        let spec = c.dataset_spec(b, &sys, Chart::Cartesian, Split::Test);
        let ranges = InitialRanges {
            pendulum_angle: [-1.0, 1.0],
            pendulum_rate: [-0.5, 0.5],
            gyro_tilt: [0.2, 1.0],
            gyro_angle: [-1.0, 1.0],
            gyro_spin: [2.0, 3.0],
            gyro_rate: [-0.1, 0.1],
        };
        assert_eq!(
            spec,
            DatasetSpec { count: 7, steps: 50, dt: 0.025, noise: 0.02, seed: 5, chart: Chart::Cartesian, split: Split::Test, substeps: 4, ranges }
        );
        assert_eq!(c.hyper(3), ModelHyper { hidden: vec![16, 16], mass_eps: 0.05, seed: 3 });
        let t = c.train_config(4, true);
        assert_eq!(
            t,
            TrainConfig {
                epochs: 7,
                learning_rate: 0.002,
                batch_size: 8,
                snippet_len: 4,
                weight_decay: 0.0,
                beta1: 0.8,
                beta2: 0.99,
                eps: 1e-7,
                seed: 15,
                checkpoint_every: 2,
                parallel: true,
            }
        );
        assert_eq!(c.eval.t_eval, vec![3, 9]);
        let s = c.sweep.as_ref().unwrap();
        assert_eq!((s.sizes.clone(), s.t_eval), (vec![10, 30], 5));
        assert_eq!(c.all_kinds(), vec![ModelKind::HnnAngle, ModelKind::Chnn, ModelKind::Clnn]);
        assert_eq!(c.model.seeds, vec![3, 4]);
        assert_eq!(c.output, Some(PathBuf::from("out")));
        // round trip through the serialized form loses nothing
        let again = ExperimentConfig::from_toml(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn defaults_follow_the_benchmark_protocol() {
        let c = ExperimentConfig::from_toml("[[system]]\nname = \"gyroscope\"\n[model]\nkinds = [\"CHNN\"]\n").unwrap();
        let b = &c.systems[0];
        let sys = b.build().unwrap();
        assert_eq!(b.dt(&sys), 0.02);
        assert_eq!((c.data.train_count, c.data.test_count, c.data.noise), (800, 100, 0.01));
        assert_eq!(b.steps, 100);
        assert_eq!(c.model.hidden, vec![256, 256, 256]);
        assert_eq!(c.eval.t_eval, vec![4, 20]);
        assert_eq!(c.charts(), vec![Chart::Cartesian]);
        let p = ExperimentConfig::from_toml("[[system]]\nname = \"pendulum4\"\n[model]\nkinds = [\"HNN\"]\n").unwrap();
        assert_eq!(p.systems[0].dt(&p.systems[0].build().unwrap()), 0.03);
    }

    #[test]
    fn full_size_sweep_endpoints_are_accepted() {
        let text = "[[system]]\nname = \"pendulum2\"\n[data]\ntrain_count = 10000\n[model]\nkinds = [\"CLNN\"]\n[sweep]\nsizes = [10, 10000]\n";
        assert!(ExperimentConfig::from_toml(text).is_ok());
    }

    #[test]
    fn shipped_configs_parse() {
        for text in [include_str!("../../../configs/desk.toml"), include_str!("../../../configs/benchmark.toml")] {
            ExperimentConfig::from_toml(text).unwrap();
        }
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        for text in [
            "[[system]]\nname = \"pendulum2\"\n[model]\nkinds = [\"XNN\"]\n",
            "[[system]]\nname = \"pendulum0\"\n[model]\nkinds = [\"HNN\"]\n",
            "[[system]]\nname = \"pendulum2\"\ncolour = 1\n[model]\nkinds = [\"HNN\"]\n",
            "[[system]]\nname = \"pendulum2\"\ndt = -1.0\n[model]\nkinds = [\"HNN\"]\n",
            "[[system]]\nname = \"pendulum2\"\nsteps = 3\n[model]\nkinds = [\"HNN\"]\n",
            "[[system]]\nname = \"pendulum2\"\n[model]\nkinds = []\n",
            "[[system]]\nname = \"pendulum2\"\n[model]\nkinds = [\"HNN\"]\n[sweep]\nsizes = [900]\n",
            "[[system]]\nname = \"pendulum2\"\nparams = { kind = \"gyroscope\" }\n[model]\nkinds = [\"HNN\"]\n",
            "model = 3",
        ] {
            let e = ExperimentConfig::from_toml(text).unwrap_err();
            assert_eq!(crate::exit_code(&e), 2, "{text}: {e:#}");
        }
    }
}
