//! Ground-truth systems behind one type, with both coordinate charts.

use serde::{Deserialize, Serialize};

use super::gyroscope::{Gyroscope, GyroscopeParams};
use super::operators::{constrained_lagrangian_accel, structured_lagrangian_accel};
use super::pendulum::{Pendulum, PendulumParams};
use super::{Constraints, MassMatrix, Potential};
use crate::diffcore::{dot, Dual, Scalar};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};

/// Which coordinates a state vector is expressed in. States are always
/// `(position, velocity)` halves of equal length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chart {
    /// Minimal angular coordinates `(q, q̇)`.
    #[serde(rename = "angular")]
    Generalized,
    /// Redundant Cartesian coordinates `(x, ẋ)` with explicit constraints.
    Cartesian,
}

impl Chart {
    pub fn name(self) -> &'static str {
        match self {
            Chart::Generalized => "angular",
            Chart::Cartesian => "cartesian",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SystemConfig {
    Pendulum(PendulumParams),
    Gyroscope(GyroscopeParams),
}

impl SystemConfig {
    /// Default parameters for a named system: `pendulum<N>` or `gyroscope`.
    pub fn by_name(name: &str) -> Result<Self> {
        if name == "gyroscope" {
            return Ok(SystemConfig::Gyroscope(GyroscopeParams::default()));
        }
        if let Some(n) = name.strip_prefix("pendulum") {
            if let Ok(n) = n.parse::<usize>() {
                if n >= 1 {
                    return Ok(SystemConfig::Pendulum(PendulumParams::uniform(n)));
                }
            }
        }
        Err(Error::Config(format!("unknown system {name:?}")))
    }

    pub fn build(&self) -> Result<System> {
        match self {
            SystemConfig::Pendulum(p) => Ok(System::Pendulum(Pendulum::new(p.clone())?)),
            SystemConfig::Gyroscope(p) => Ok(System::Gyroscope(Gyroscope::new(p.clone())?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum System {
    Pendulum(Pendulum),
    Gyroscope(Gyroscope),
}

impl System {
    pub fn by_name(name: &str) -> Result<Self> {
        SystemConfig::by_name(name)?.build()
    }

    pub fn config(&self) -> SystemConfig {
        match self {
            System::Pendulum(p) => SystemConfig::Pendulum(p.params().clone()),
            System::Gyroscope(g) => SystemConfig::Gyroscope(g.params().clone()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            System::Pendulum(p) => format!("pendulum{}", p.links()),
            System::Gyroscope(_) => "gyroscope".to_string(),
        }
    }

    /// Degrees of freedom `M`.
    pub fn dof(&self) -> usize {
        match self {
            System::Pendulum(p) => p.links(),
            System::Gyroscope(_) => 3,
        }
    }

    /// Cartesian dimension `D`.
    pub fn cartesian_dim(&self) -> usize {
        Constraints::dim(self)
    }

    /// Length of a position (or velocity) half in the given chart.
    pub fn coord_dim(&self, chart: Chart) -> usize {
        match chart {
            Chart::Generalized => self.dof(),
            Chart::Cartesian => self.cartesian_dim(),
        }
    }

    pub fn state_dim(&self, chart: Chart) -> usize {
        2 * self.coord_dim(chart)
    }

    /// Which generalized coordinates are angles.
    pub fn angular_mask(&self) -> Vec<bool> {
        vec![true; self.dof()]
    }

    /// Nominal integration step.
    pub fn default_dt(&self) -> f64 {
        match self {
            System::Pendulum(_) => 0.03,
            System::Gyroscope(_) => 0.02,
        }
    }

    pub fn mass_q<S: Scalar>(&self, q: &[S]) -> Mat<S> {
        match self {
            System::Pendulum(p) => p.mass(q),
            System::Gyroscope(g) => g.mass(q),
        }
    }

    pub fn potential_q<S: Scalar>(&self, q: &[S]) -> S {
        match self {
            System::Pendulum(p) => p.potential(q),
            System::Gyroscope(g) => g.potential(q),
        }
    }

    pub fn cartesian_mass(&self) -> Mat<f64> {
        match self {
            System::Pendulum(p) => p.cartesian_mass(),
            System::Gyroscope(g) => g.cartesian_mass(),
        }
    }

    pub fn cartesian_potential<S: Scalar>(&self, x: &[S]) -> S {
        match self {
            System::Pendulum(p) => p.cartesian_potential(x),
            System::Gyroscope(g) => g.cartesian_potential(x),
        }
    }

    pub fn to_cartesian<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        match self {
            System::Pendulum(p) => p.to_cartesian(q),
            System::Gyroscope(g) => g.to_cartesian(q),
        }
    }

    /// `ẋ = (∂x/∂q) q̇`, one dual pass.
    pub fn velocity_to_cartesian<S: Scalar>(&self, q: &[S], qd: &[S]) -> Vec<S> {
        self.to_cartesian(&Dual::seed(q, qd)).into_iter().map(|v| v.tangent).collect()
    }

    /// `∂x/∂q`, `D × M`.
    pub fn position_jacobian(&self, q: &[f64]) -> Mat<f64> {
        let d = self.cartesian_dim();
        let n = q.len();
        let cols: Vec<Vec<f64>> = (0..n)
            .map(|k| self.to_cartesian(&Dual::seed_axis(q, k)).into_iter().map(|v| v.tangent).collect())
            .collect();
        Mat::from_fn(d, n, |i, k| cols[k][i])
    }

    /// `(q, q̇) ↦ (x, ẋ)`.
    pub fn state_to_cartesian(&self, s: &[f64]) -> Vec<f64> {
        let n = self.dof();
        let (q, qd) = s.split_at(n);
        let mut out = self.to_cartesian(q);
        out.extend(self.velocity_to_cartesian(q, qd));
        out
    }

    /// `(x, ẋ) ↦ (q, q̇)`; angles come back wrapped to `(−π, π]` and `q̇` is
    /// the least-squares solution of `(∂x/∂q) q̇ = ẋ`.
    pub fn state_from_cartesian(&self, s: &[f64]) -> Result<Vec<f64>> {
        let d = self.cartesian_dim();
        let (x, xd) = s.split_at(d);
        let q = match self {
            System::Pendulum(p) => p.angles_from_cartesian(x),
            System::Gyroscope(g) => g.angles_from_cartesian(x),
        };
        let jac = self.position_jacobian(&q);
        let jtj = jac.transpose().matmul(&jac);
        let rhs = jac.tr_matvec(xd);
        let qd = Cholesky::factor(&jtj)
            .map_err(|_| Error::SingularDynamics {
                reason: "coordinate map is singular at this configuration".into(),
                state: s.to_vec(),
            })?
            .solve(&rhs);
        let mut out = q;
        out.extend(qd);
        Ok(out)
    }

    /// Total energy of a state in the given chart.
    pub fn energy(&self, chart: Chart, s: &[f64]) -> f64 {
        let n = self.coord_dim(chart);
        let (a, b) = s.split_at(n);
        match chart {
            Chart::Generalized => 0.5 * dot(b, &self.mass_q(a).matvec(b)) + self.potential_q(a),
            Chart::Cartesian => {
                0.5 * dot(b, &self.cartesian_mass().matvec(b)) + self.cartesian_potential(a)
            }
        }
    }

    /// Ground-truth state derivative in the given chart.
    pub fn field<S: Scalar>(&self, chart: Chart, s: &[S]) -> Result<Vec<S>> {
        let n = self.coord_dim(chart);
        if s.len() != 2 * n {
            return Err(Error::Shape(format!(
                "{} {} state has length {}, expected {}",
                self.name(),
                chart.name(),
                s.len(),
                2 * n
            )));
        }
        let (a, b) = s.split_at(n);
        let acc = match chart {
            Chart::Generalized => {
                structured_lagrangian_accel(&AnalyticMass(self), &AnalyticPotential(self), a, b)?
            }
            Chart::Cartesian => {
                let m = self.cartesian_mass().map(S::cst);
                constrained_lagrangian_accel(&m, &AnalyticCartesianPotential(self), self, a, b)?
            }
        };
        let mut out = b.to_vec();
        out.extend(acc);
        Ok(out)
    }

    /// `‖Φ(x)‖∞` and `‖G ẋ‖∞` for a Cartesian state.
    pub fn constraint_residuals(&self, s: &[f64]) -> (f64, f64) {
        let d = self.cartesian_dim();
        let (x, xd) = s.split_at(d);
        let pos = self.residual(x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let vel = self.jacobian(x).matvec(xd).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (pos, vel)
    }
}

impl Constraints for System {
    fn count(&self) -> usize {
        match self {
            System::Pendulum(p) => p.count(),
            System::Gyroscope(g) => g.count(),
        }
    }

    fn dim(&self) -> usize {
        match self {
            System::Pendulum(p) => p.dim(),
            System::Gyroscope(g) => g.dim(),
        }
    }

    fn residual<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        match self {
            System::Pendulum(p) => p.residual(x),
            System::Gyroscope(g) => g.residual(x),
        }
    }

    fn jacobian<S: Scalar>(&self, x: &[S]) -> Mat<S> {
        match self {
            System::Pendulum(p) => p.jacobian(x),
            System::Gyroscope(g) => g.jacobian(x),
        }
    }

    fn jacobian_dot<S: Scalar>(&self, x: &[S], xd: &[S]) -> Mat<S> {
        match self {
            System::Pendulum(p) => p.jacobian_dot(x, xd),
            System::Gyroscope(g) => g.jacobian_dot(x, xd),
        }
    }
}

/// The system's `M(q)` as a mechanics callable.
#[derive(Clone, Copy)]
pub struct AnalyticMass<'a>(pub &'a System);

impl<L: Scalar> MassMatrix<L> for AnalyticMass<'_> {
    fn mass<S: Scalar<Leaf = L>>(&self, q: &[S]) -> Result<Mat<S>> {
        Ok(self.0.mass_q(q))
    }
}

/// The system's `V(q)`.
#[derive(Clone, Copy)]
pub struct AnalyticPotential<'a>(pub &'a System);

impl<L: Scalar> Potential<L> for AnalyticPotential<'_> {
    fn potential<S: Scalar<Leaf = L>>(&self, q: &[S]) -> Result<S> {
        Ok(self.0.potential_q(q))
    }
}

/// The system's Cartesian `V(x)`.
#[derive(Clone, Copy)]
pub struct AnalyticCartesianPotential<'a>(pub &'a System);

impl<L: Scalar> Potential<L> for AnalyticCartesianPotential<'_> {
    fn potential<S: Scalar<Leaf = L>>(&self, x: &[S]) -> Result<S> {
        Ok(self.0.cartesian_potential(x))
    }
}
