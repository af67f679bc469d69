//! Building blocks shared by the model kinds.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{Mlp, Scalar};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::mechanics::{body_point_mass, System};

/// `q ↦ (cos q_i, sin q_i)` on angular coordinates, identity elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleEmbedding {
    mask: Vec<bool>,
}

impl AngleEmbedding {
    pub fn new(mask: Vec<bool>) -> Self {
        AngleEmbedding { mask }
    }

    /// Pass-through for `n` coordinates.
    pub fn identity(n: usize) -> Self {
        AngleEmbedding { mask: vec![false; n] }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn input_dim(&self) -> usize {
        self.mask.len()
    }

    pub fn output_dim(&self) -> usize {
        self.mask.iter().map(|&a| if a { 2 } else { 1 }).sum()
    }

    pub fn apply<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        let mut out = Vec::with_capacity(self.output_dim());
        for (&v, &angular) in q.iter().zip(&self.mask) {
            if angular {
                out.push(v.cos());
                out.push(v.sin());
            } else {
                out.push(v);
            }
        }
        out
    }
}

/// `M(q) = L(q)L(q)ᵀ + εI` with the lower triangle of `L` read row by row
/// from a network's outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyMassHead {
    pub net: Mlp,
    pub dim: usize,
    pub eps: f64,
}

impl CholeskyMassHead {
    pub fn outputs(dim: usize) -> usize {
        dim * (dim + 1) / 2
    }

    /// `features` is the (possibly embedded) configuration.
    pub fn mass<S: Scalar>(&self, params: &[S::Leaf], features: &[S]) -> Result<Mat<S>> {
        let raw = self.net.forward(params, features)?;
        let n = self.dim;
        let mut l = Mat::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in 0..=i {
                l[(i, j)] = raw[k];
                k += 1;
            }
        }
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = S::zero();
                for c in 0..=j {
                    s += l[(i, c)] * l[(j, c)];
                }
                if i == j {
                    s = s + self.eps;
                }
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        Ok(m)
    }
}

/// Body layout of a constant Cartesian mass matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockLayout {
    /// Point masses in the plane: `log m_i` per bob, `M = diag(m_i) ⊗ I₂`.
    Points { count: usize, spatial: usize },
    /// One rigid body tracked by four points: `log m`, `log J` (three
    /// second moments about the centre of mass) and the centre of mass `c`
    /// in body coordinates.
    RigidBody { basis_inverse: Mat<f64>, spread: f64 },
}

/// Constant Cartesian mass with exponentiated positive parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnableBlockMass {
    pub offset: usize,
    pub layout: BlockLayout,
}

impl LearnableBlockMass {
    pub fn for_system(system: &System, offset: usize) -> Self {
        let layout = match system {
            System::Pendulum(p) => BlockLayout::Points { count: p.links(), spatial: 2 },
            System::Gyroscope(g) => {
                let pts = &g.params().points;
                let spread = pts.iter().map(|a| a.iter().map(|v| v * v).sum::<f64>().sqrt()).sum::<f64>() / 3.0;
                BlockLayout::RigidBody { basis_inverse: g.point_basis_inverse().clone(), spread }
            }
        };
        LearnableBlockMass { offset, layout }
    }

    pub fn len(&self) -> usize {
        match &self.layout {
            BlockLayout::Points { count, .. } => *count,
            BlockLayout::RigidBody { .. } => 7,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    pub fn assemble<S: Scalar>(&self, params: &[S::Leaf]) -> Result<Mat<S>> {
        if params.len() < self.offset + self.len() {
            return Err(Error::Config("parameter vector too short for the mass block".into()));
        }
        let p = |k: usize| S::from_leaf(params[self.offset + k]);
        Ok(match &self.layout {
            BlockLayout::Points { count, spatial } => {
                let mut d = Vec::with_capacity(count * spatial);
                for i in 0..*count {
                    let m = p(i).exp();
                    d.extend(std::iter::repeat_n(m, *spatial));
                }
                Mat::diag(&d)
            }
            BlockLayout::RigidBody { basis_inverse, .. } => {
                let m = p(0).exp();
                body_point_mass(basis_inverse, m, [p(1).exp(), p(2).exp(), p(3).exp()], [p(4), p(5), p(6)])
            }
        })
    }

    /// Realized physical values `(masses…)` or `(m, J₁, J₂, J₃, c₁, c₂, c₃)`.
    pub fn physical(&self, params: &[f64]) -> Vec<f64> {
        let raw = &params[self.range()];
        match &self.layout {
            BlockLayout::Points { .. } => raw.iter().map(|v| v.exp()).collect(),
            BlockLayout::RigidBody { .. } => {
                raw.iter().enumerate().map(|(k, &v)| if k < 4 { v.exp() } else { v }).collect()
            }
        }
    }

    /// Raw parameters reproducing the system's true mass distribution.
    pub fn truth(&self, system: &System) -> Vec<f64> {
        match system {
            System::Pendulum(p) => p.params().masses.iter().map(|m| m.ln()).collect(),
            System::Gyroscope(g) => {
                let gp = g.params();
                let j = crate::mechanics::second_moments(gp.moments);
                vec![gp.mass.ln(), j[0].ln(), j[1].ln(), j[2].ln(), 0.0, 0.0, gp.distance]
            }
        }
    }

    /// Log-parameters drawn around unit mass; second moments around the
    /// squared spread of the tracked points; centre of mass at the pivot.
    pub fn init(&self, params: &mut [f64], rng: &mut ChaCha8Rng) {
        let off = self.offset;
        match &self.layout {
            BlockLayout::Points { count, .. } => {
                for v in &mut params[off..off + count] {
                    *v = rng.gen_range(-0.5..0.5);
                }
            }
            BlockLayout::RigidBody { spread, .. } => {
                params[off] = rng.gen_range(-0.5..0.5);
                for k in 1..4 {
                    params[off + k] = (spread * spread).ln() + rng.gen_range(-0.5..0.5);
                }
                for k in 4..7 {
                    params[off + k] = 0.0;
                }
            }
        }
    }
}
