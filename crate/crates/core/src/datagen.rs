//! Ground-truth trajectory datasets and training snippets.
//!
//! Every trajectory draws from its own ChaCha8 stream derived from
//! `(seed, split, index)`, so generation order and thread count never change
//! the result.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffcore::init_rng;
use crate::error::{Error, Result};
use crate::mechanics::{Chart, System, SystemConfig};
use crate::odeint::rk4_step;

pub const DATASET_FORMAT: &str = "ecbench-dataset/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn stream_base(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1 << 40,
        }
    }
}

/// Uniform ranges for initial conditions, as `[low, high)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialRanges {
    pub pendulum_angle: [f64; 2],
    pub pendulum_rate: [f64; 2],
    /// Nutation angle θ.
    pub gyro_tilt: [f64; 2],
    /// Precession and spin angles φ, ψ.
    pub gyro_angle: [f64; 2],
    /// Spin rate ψ̇.
    pub gyro_spin: [f64; 2],
    /// Precession and nutation rates φ̇, θ̇.
    pub gyro_rate: [f64; 2],
}

impl Default for InitialRanges {
    fn default() -> Self {
        use std::f64::consts::PI;
        InitialRanges {
            pendulum_angle: [-PI, PI],
            pendulum_rate: [-1.0, 1.0],
            gyro_tilt: [0.1, PI / 3.0],
            gyro_angle: [-PI, PI],
            gyro_spin: [3.0, 5.0],
            gyro_rate: [-1.0, 1.0],
        }
    }
}

impl InitialRanges {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("pendulum_angle", self.pendulum_angle),
            ("pendulum_rate", self.pendulum_rate),
            ("gyro_tilt", self.gyro_tilt),
            ("gyro_angle", self.gyro_angle),
            ("gyro_spin", self.gyro_spin),
            ("gyro_rate", self.gyro_rate),
        ];
        for (name, [lo, hi]) in all {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("range {name} = [{lo}, {hi}) is empty or not finite")));
            }
        }
        Ok(())
    }

    fn draw(&self, system: &System, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let u = |rng: &mut ChaCha8Rng, r: [f64; 2]| rng.gen_range(r[0]..r[1]);
        match system {
            System::Pendulum(p) => {
                let n = p.links();
                let mut s: Vec<f64> = (0..n).map(|_| u(rng, self.pendulum_angle)).collect();
                s.extend((0..n).map(|_| u(rng, self.pendulum_rate)));
                s
            }
            System::Gyroscope(_) => {
                let phi = u(rng, self.gyro_angle);
                let theta = u(rng, self.gyro_tilt);
                let psi = u(rng, self.gyro_angle);
                let phid = u(rng, self.gyro_rate);
                let thetad = u(rng, self.gyro_rate);
                let psid = u(rng, self.gyro_spin);
                vec![phi, theta, psi, phid, thetad, psid]
            }
        }
    }
}

fn ic_rng(seed: u64, split: Split, index: usize) -> ChaCha8Rng {
    init_rng(seed, split.stream_base() + 2 * index as u64)
}

fn noise_rng(seed: u64, split: Split, index: usize) -> ChaCha8Rng {
    init_rng(seed, split.stream_base() + 2 * index as u64 + 1)
}

/// `count` initial states in the requested chart. Cartesian states are the
/// image of generalized ones, so they satisfy the constraints exactly.
pub fn sample_initial_conditions(
    system: &System,
    count: usize,
    seed: u64,
    split: Split,
    ranges: &InitialRanges,
    chart: Chart,
) -> Result<Vec<Vec<f64>>> {
    ranges.validate()?;
    Ok((0..count)
        .map(|i| {
            let g = ranges.draw(system, &mut ic_rng(seed, split, i));
            match chart {
                Chart::Generalized => g,
                Chart::Cartesian => system.state_to_cartesian(&g),
            }
        })
        .collect())
}

/// What to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub count: usize,
    /// Recorded steps after the initial state.
    pub steps: usize,
    pub dt: f64,
    pub noise: f64,
    pub seed: u64,
    pub chart: Chart,
    pub split: Split,
    /// RK4 steps per recorded interval.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub ranges: InitialRanges,
}

pub fn default_substeps() -> usize {
    10
}

impl DatasetSpec {
    /// Benchmark protocol for a system: 100 recorded steps at the system's
    /// nominal dt, σ = 0.01.
    pub fn protocol(system: &System, count: usize, seed: u64, chart: Chart, split: Split) -> Self {
        DatasetSpec {
            count,
            steps: 100,
            dt: system.default_dt(),
            noise: 0.01,
            seed,
            chart,
            split,
            substeps: default_substeps(),
            ranges: InitialRanges::default(),
        }
    }

    /// Metadata of the dataset this spec generates.
    pub fn meta(&self, system: &System) -> DatasetMeta {
        DatasetMeta {
            format: DATASET_FORMAT.to_string(),
            system_name: system.name(),
            system: system.config(),
            count: self.count,
            length: self.steps + 1,
            dim: system.state_dim(self.chart),
            dt: self.dt,
            noise: self.noise,
            seed: self.seed,
            chart: self.chart,
            split: self.split,
            substeps: self.substeps,
            ranges: self.ranges.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise must be non-negative, got {}", self.noise)));
        }
        if self.steps == 0 {
            return Err(Error::Config("datasets need at least one recorded step".into()));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be at least 1".into()));
        }
        self.ranges.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format: String,
    pub system_name: String,
    pub system: SystemConfig,
    /// Number of trajectories.
    pub count: usize,
    /// Rows per trajectory (`steps + 1`).
    pub length: usize,
    /// State dimension.
    pub dim: usize,
    pub dt: f64,
    pub noise: f64,
    pub seed: u64,
    pub chart: Chart,
    pub split: Split,
    pub substeps: usize,
    pub ranges: InitialRanges,
}

/// Trajectories stored row-major as `count × length × dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub meta: DatasetMeta,
    pub states: Vec<f64>,
}

impl TrajectoryDataset {
    pub fn count(&self) -> usize {
        self.meta.count
    }

    pub fn length(&self) -> usize {
        self.meta.length
    }

    pub fn dim(&self) -> usize {
        self.meta.dim
    }

    pub fn system(&self) -> Result<System> {
        self.meta.system.build()
    }

    /// All rows of trajectory `i`, flattened.
    pub fn trajectory(&self, i: usize) -> &[f64] {
        let n = self.meta.length * self.meta.dim;
        &self.states[i * n..(i + 1) * n]
    }

    pub fn state(&self, i: usize, t: usize) -> &[f64] {
        let d = self.meta.dim;
        let start = (i * self.meta.length + t) * d;
        &self.states[start..start + d]
    }

    /// The first `count` trajectories.
    pub fn truncated(&self, count: usize) -> TrajectoryDataset {
        let count = count.min(self.meta.count);
        let mut meta = self.meta.clone();
        meta.count = count;
        let n = meta.length * meta.dim;
        TrajectoryDataset { meta, states: self.states[..count * n].to_vec() }
    }

    fn check(&self, path: &str) -> Result<()> {
        let m = &self.meta;
        let bad = |reason: String| Err(Error::Format { path: path.to_string(), reason });
        if m.format != DATASET_FORMAT {
            return bad(format!("unknown format {:?}", m.format));
        }
        if !(m.dt > 0.0) || m.length == 0 {
            return bad("dt must be positive and trajectories non-empty".into());
        }
        if self.states.len() != m.count * m.length * m.dim {
            return bad(format!(
                "{} values for {} × {} × {}",
                self.states.len(),
                m.count,
                m.length,
                m.dim
            ));
        }
        Ok(())
    }

    /// `<dir>/meta.json` and `<dir>/states.f64`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&self.meta)? + "\n")?;
        let mut bytes = Vec::with_capacity(self.states.len() * 8);
        for v in &self.states {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join("states.f64"), bytes)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?).map_err(|e| {
            Error::Format { path: meta_path.display().to_string(), reason: e.to_string() }
        })?;
        let states_path = dir.join("states.f64");
        let bytes = fs::read(&states_path)?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Format {
                path: states_path.display().to_string(),
                reason: format!("{} bytes is not a whole number of f64 values", bytes.len()),
            });
        }
        let states = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let ds = TrajectoryDataset { meta, states };
        ds.check(&dir.display().to_string())?;
        Ok(ds)
    }
}

/// Ground-truth rollout from `s0`: `steps` recorded intervals of `dt`, each
/// integrated with `substeps` RK4 steps. Returns `steps + 1` rows.
pub fn simulate(system: &System, chart: Chart, s0: &[f64], dt: f64, steps: usize, substeps: usize) -> Result<Vec<Vec<f64>>> {
    let h = dt / substeps as f64;
    let mut field = |s: &[f64]| system.field(chart, s);
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = s0.to_vec();
    out.push(s.clone());
    for step in 1..=steps {
        for _ in 0..substeps {
            s = rk4_step(&mut field, &s, h)?;
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step });
        }
        out.push(s.clone());
    }
    Ok(out)
}

pub fn generate_dataset(system: &System, spec: &DatasetSpec) -> Result<TrajectoryDataset> {
    spec.validate()?;
    let dim = system.state_dim(spec.chart);
    let ics = sample_initial_conditions(system, spec.count, spec.seed, spec.split, &spec.ranges, spec.chart)?;
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
    let trajs: Vec<Vec<f64>> = ics
        .par_iter()
        .enumerate()
        .map(|(i, s0)| {
            let rows = simulate(system, spec.chart, s0, spec.dt, spec.steps, spec.substeps)
                .map_err(|e| Error::Trajectory { index: i, source: Box::new(e) })?;
            let mut rng = noise_rng(spec.seed, spec.split, i);
            let mut flat = Vec::with_capacity(rows.len() * dim);
            for row in rows {
                for v in row {
                    flat.push(if spec.noise > 0.0 { v + noise.sample(&mut rng) } else { v });
                }
            }
            Ok(flat)
        })
        .collect::<Result<_>>()?;
    Ok(TrajectoryDataset {
        meta: spec.meta(system),
        states: trajs.concat(),
    })
}

/// A window `start .. start + len` of trajectory `trajectory`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Snippet {
    pub trajectory: usize,
    pub start: usize,
    pub len: usize,
}

impl Snippet {
    /// Rows `s₀ … s_T` of the window.
    pub fn states<'a>(&self, ds: &'a TrajectoryDataset) -> Vec<&'a [f64]> {
        (self.start..self.start + self.len).map(|t| ds.state(self.trajectory, t)).collect()
    }
}

/// `batch` windows with uniformly random trajectory and start.
pub fn sample_snippets_with(ds: &TrajectoryDataset, len: usize, batch: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Snippet>> {
    if len == 0 || len > ds.length() {
        return Err(Error::Config(format!("snippet length {len} must be in 1..={}", ds.length())));
    }
    if ds.count() == 0 {
        return Err(Error::Config("cannot sample snippets from an empty dataset".into()));
    }
    let starts = ds.length() - len + 1;
    Ok((0..batch)
        .map(|_| Snippet { trajectory: rng.gen_range(0..ds.count()), start: rng.gen_range(0..starts), len })
        .collect())
}

pub fn sample_snippets(ds: &TrajectoryDataset, len: usize, batch: usize, seed: u64) -> Result<Vec<Snippet>> {
    sample_snippets_with(ds, len, batch, &mut init_rng(seed, 0))
}
