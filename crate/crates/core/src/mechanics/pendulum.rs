//! Planar chain of point masses on massless rods, pivot at the origin.
//!
//! Angles are measured from the downward vertical, so bob `i` sits at
//! `x_{i−1} + l_i (sin q_i, −cos q_i)`.

use serde::{Deserialize, Serialize};

use super::Constraints;
use crate::diffcore::Scalar;
use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub masses: Vec<f64>,
    pub lengths: Vec<f64>,
    pub gravity: f64,
}

impl PendulumParams {
    /// Unit masses and lengths, `g = 9.81`.
    pub fn uniform(n: usize) -> Self {
        PendulumParams { masses: vec![1.0; n], lengths: vec![1.0; n], gravity: 9.81 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum {
    p: PendulumParams,
}

impl Pendulum {
    pub fn new(p: PendulumParams) -> Result<Self> {
        let n = p.masses.len();
        if n == 0 {
            return Err(Error::Config("pendulum needs at least one link".into()));
        }
        if p.lengths.len() != n {
            return Err(Error::Config(format!(
                "pendulum has {n} masses but {} lengths",
                p.lengths.len()
            )));
        }
        if p.masses.iter().chain(&p.lengths).any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Config("pendulum masses and lengths must be positive".into()));
        }
        if !(p.gravity > 0.0 && p.gravity.is_finite()) {
            return Err(Error::Config("gravity must be positive".into()));
        }
        Ok(Pendulum { p })
    }

    pub fn params(&self) -> &PendulumParams {
        &self.p
    }

    pub fn links(&self) -> usize {
        self.p.masses.len()
    }

    /// `M_ij = l_i l_j cos(q_i − q_j) Σ_{k ≥ max(i,j)} m_k`.
    pub fn mass<S: Scalar>(&self, q: &[S]) -> Mat<S> {
        let n = self.links();
        let mut tail = vec![0.0; n];
        let mut acc = 0.0;
        for k in (0..n).rev() {
            acc += self.p.masses[k];
            tail[k] = acc;
        }
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::cst(tail[i] * self.p.lengths[i] * self.p.lengths[i]);
            for j in 0..i {
                let c = (q[i] - q[j]).cos() * (tail[i] * self.p.lengths[i] * self.p.lengths[j]);
                m[(i, j)] = c;
                m[(j, i)] = c;
            }
        }
        m
    }

    /// `V = −g Σ_i m_i Σ_{k≤i} l_k cos q_k`.
    pub fn potential<S: Scalar>(&self, q: &[S]) -> S {
        let n = self.links();
        let mut v = S::zero();
        let mut tail = 0.0;
        for k in (0..n).rev() {
            tail += self.p.masses[k];
            v -= q[k].cos() * (self.p.gravity * tail * self.p.lengths[k]);
        }
        v
    }

    pub fn to_cartesian<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        let mut out = Vec::with_capacity(2 * q.len());
        let (mut x, mut y) = (S::zero(), S::zero());
        for (i, &qi) in q.iter().enumerate() {
            x += qi.sin() * self.p.lengths[i];
            y -= qi.cos() * self.p.lengths[i];
            out.push(x);
            out.push(y);
        }
        out
    }

    pub fn angles_from_cartesian(&self, x: &[f64]) -> Vec<f64> {
        let (mut px, mut py) = (0.0, 0.0);
        (0..self.links())
            .map(|i| {
                let (dx, dy) = (x[2 * i] - px, x[2 * i + 1] - py);
                px = x[2 * i];
                py = x[2 * i + 1];
                dx.atan2(-dy)
            })
            .collect()
    }

    /// Diagonal Cartesian mass `diag(m_1, m_1, m_2, m_2, …)`.
    pub fn cartesian_mass(&self) -> Mat<f64> {
        let d: Vec<f64> = self.p.masses.iter().flat_map(|&m| [m, m]).collect();
        Mat::diag(&d)
    }

    /// `V = g Σ m_i y_i`.
    pub fn cartesian_potential<S: Scalar>(&self, x: &[S]) -> S {
        let mut v = S::zero();
        for (i, &m) in self.p.masses.iter().enumerate() {
            v += x[2 * i + 1] * (self.p.gravity * m);
        }
        v
    }

    /// Pairs `(previous point, link vector)` for each rod.
    fn link<S: Scalar>(x: &[S], i: usize) -> (S, S) {
        if i == 0 {
            (x[0], x[1])
        } else {
            (x[2 * i] - x[2 * i - 2], x[2 * i + 1] - x[2 * i - 1])
        }
    }
}

impl Constraints for Pendulum {
    fn count(&self) -> usize {
        self.links()
    }

    fn dim(&self) -> usize {
        2 * self.links()
    }

    /// `Φ_i = ½(‖x_i − x_{i−1}‖² − l_i²)`.
    fn residual<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        (0..self.links())
            .map(|i| {
                let (dx, dy) = Self::link(x, i);
                (dx * dx + dy * dy - self.p.lengths[i] * self.p.lengths[i]) * 0.5
            })
            .collect()
    }

    fn jacobian<S: Scalar>(&self, x: &[S]) -> Mat<S> {
        let n = self.links();
        let mut g = Mat::zeros(n, 2 * n);
        for i in 0..n {
            let (dx, dy) = Self::link(x, i);
            g[(i, 2 * i)] = dx;
            g[(i, 2 * i + 1)] = dy;
            if i > 0 {
                g[(i, 2 * i - 2)] = -dx;
                g[(i, 2 * i - 1)] = -dy;
            }
        }
        g
    }

    /// `Φ̇_i = (x_i − x_{i−1})·(ẋ_i − ẋ_{i−1})`, so `Ġ` has the same pattern
    /// as `G` with velocities in place of positions.
    fn jacobian_dot<S: Scalar>(&self, _x: &[S], xd: &[S]) -> Mat<S> {
        self.jacobian(xd)
    }
}
