//! Heavy top pinned at a fixed pivot.
//!
//! Generalized chart: ZXZ Euler angles `(φ, θ, ψ)` with the body z-axis
//! through the centre of mass. Cartesian chart: world positions of four
//! body-fixed points, the first being the pivot itself.

use serde::{Deserialize, Serialize};

use super::Constraints;
use crate::diffcore::Scalar;
use crate::error::{Error, Result};
use crate::linalg::{Lu, Mat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GyroscopeParams {
    /// Principal moments of inertia about the centre of mass; the third is
    /// about the body z-axis.
    pub moments: [f64; 3],
    pub mass: f64,
    /// Pivot to centre-of-mass distance along the body z-axis.
    pub distance: f64,
    pub gravity: f64,
    /// Body-frame positions of the three tracked points besides the pivot.
    pub points: [[f64; 3]; 3],
}

impl Default for GyroscopeParams {
    fn default() -> Self {
        GyroscopeParams {
            moments: [0.1, 0.1, 0.15],
            mass: 1.0,
            distance: 0.05,
            gravity: 9.81,
            points: [[0.1, 0.0, 0.0], [0.0, 0.1, 0.0], [0.0, 0.0, 0.1]],
        }
    }
}

/// Pairs of tracked points whose distance is held fixed.
const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

#[derive(Debug, Clone, PartialEq)]
pub struct Gyroscope {
    p: GyroscopeParams,
    /// Body-frame points including the pivot at index 0.
    body: [[f64; 3]; 4],
    /// Inverse of the 4×4 homogeneous point matrix (columns `(a_k, 1)`).
    binv: Mat<f64>,
    /// Moments about the pivot for the Euler-angle kinetic energy.
    pivot_moments: [f64; 3],
    cart_mass: Mat<f64>,
    /// Affine weights expressing the centre of mass in the tracked points.
    cm_weights: [f64; 4],
    rest_sq: [f64; 6],
}

impl Gyroscope {
    pub fn new(p: GyroscopeParams) -> Result<Self> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !p.moments.iter().all(|&v| pos(v)) || !pos(p.mass) || !pos(p.gravity) {
            return Err(Error::Config("gyroscope moments, mass and gravity must be positive".into()));
        }
        if !(p.distance >= 0.0 && p.distance.is_finite()) {
            return Err(Error::Config("gyroscope pivot distance must be non-negative".into()));
        }
        let j = second_moments(p.moments);
        if j.iter().any(|&v| v <= 0.0) {
            return Err(Error::Config(format!(
                "principal moments {:?} violate the strict triangle inequality; the mass \
                 distribution would be degenerate",
                p.moments
            )));
        }
        let body = [[0.0; 3], p.points[0], p.points[1], p.points[2]];
        let bmat = Mat::from_fn(4, 4, |i, k| if i < 3 { body[k][i] } else { 1.0 });
        let lu = Lu::factor(&bmat)
            .map_err(|_| Error::Config("gyroscope body points are coplanar with the pivot".into()))?;
        let mut cols = Vec::with_capacity(4);
        for k in 0..4 {
            let mut e = [0.0; 4];
            e[k] = 1.0;
            cols.push(lu.solve(&e));
        }
        let binv = Mat::from_fn(4, 4, |i, k| cols[k][i]);
        if crate::linalg::condition_number(&bmat) > 1e8 {
            return Err(Error::Config("gyroscope body points are nearly coplanar".into()));
        }
        let c = [0.0, 0.0, p.distance];
        let cart_mass = body_point_mass(&binv, p.mass, j, c);
        let cm = binv.matvec(&[c[0], c[1], c[2], 1.0]);
        let md2 = p.mass * p.distance * p.distance;
        let mut rest_sq = [0.0; 6];
        for (r, &(a, b)) in PAIRS.iter().enumerate() {
            rest_sq[r] = (0..3).map(|i| (body[a][i] - body[b][i]).powi(2)).sum();
        }
        Ok(Gyroscope {
            pivot_moments: [p.moments[0] + md2, p.moments[1] + md2, p.moments[2]],
            p,
            body,
            binv,
            cart_mass,
            cm_weights: [cm[0], cm[1], cm[2], cm[3]],
            rest_sq,
        })
    }

    pub fn params(&self) -> &GyroscopeParams {
        &self.p
    }

    /// Inverse homogeneous point matrix, needed to assemble point masses.
    pub fn point_basis_inverse(&self) -> &Mat<f64> {
        &self.binv
    }

    /// Maps `q̇` to body angular velocity: `ω = W(q) q̇`.
    fn body_rate_matrix<S: Scalar>(q: &[S]) -> Mat<S> {
        let (st, ct) = (q[1].sin(), q[1].cos());
        let (sp, cp) = (q[2].sin(), q[2].cos());
        let z = S::zero();
        Mat::from_vec(3, 3, vec![st * sp, cp, z, st * cp, -sp, z, ct, z, S::one()])
    }

    /// `M(q) = Wᵀ diag(I′) W` with moments taken about the pivot.
    pub fn mass<S: Scalar>(&self, q: &[S]) -> Mat<S> {
        let w = Self::body_rate_matrix(q);
        let mut m = Mat::zeros(3, 3);
        for i in 0..3 {
            for j in i..3 {
                let mut s = S::zero();
                for k in 0..3 {
                    s += w[(k, i)] * w[(k, j)] * self.pivot_moments[k];
                }
                m[(i, j)] = s;
                m[(j, i)] = s;
            }
        }
        m
    }

    /// `V = m g d cos θ`.
    pub fn potential<S: Scalar>(&self, q: &[S]) -> S {
        q[1].cos() * (self.p.mass * self.p.gravity * self.p.distance)
    }

    /// `R = R_z(φ) R_x(θ) R_z(ψ)`, body to world.
    pub fn rotation<S: Scalar>(q: &[S]) -> Mat<S> {
        let (sf, cf) = (q[0].sin(), q[0].cos());
        let (st, ct) = (q[1].sin(), q[1].cos());
        let (sp, cp) = (q[2].sin(), q[2].cos());
        Mat::from_vec(
            3,
            3,
            vec![
                cf * cp - sf * ct * sp,
                -(cf * sp) - sf * ct * cp,
                sf * st,
                sf * cp + cf * ct * sp,
                cf * ct * cp - sf * sp,
                -(cf * st),
                st * sp,
                st * cp,
                ct,
            ],
        )
    }

    pub fn to_cartesian<S: Scalar>(&self, q: &[S]) -> Vec<S> {
        let r = Self::rotation(q);
        let mut out = Vec::with_capacity(12);
        for a in &self.body {
            let av: Vec<S> = a.iter().map(|&v| S::cst(v)).collect();
            out.extend(r.matvec(&av));
        }
        out
    }

    /// Euler angles of the rotation carrying the body points onto `x`,
    /// recovered from the three non-pivot points.
    pub fn angles_from_cartesian(&self, x: &[f64]) -> Vec<f64> {
        // R A = X with A, X holding points relative to the pivot as columns.
        let a = Mat::from_fn(3, 3, |i, k| self.body[k + 1][i]);
        let xm = Mat::from_fn(3, 3, |i, k| x[3 * (k + 1) + i] - x[i]);
        let lu = Lu::factor(&a.transpose()).expect("body points validated at construction");
        // Rows of R solve Aᵀ r_i = (row i of X).
        let rows: Vec<Vec<f64>> = (0..3).map(|i| lu.solve(xm.row(i))).collect();
        let r = |i: usize, j: usize| rows[i][j];
        let theta = r(2, 2).clamp(-1.0, 1.0).acos();
        let phi = r(0, 2).atan2(-r(1, 2));
        let psi = r(2, 0).atan2(r(2, 1));
        vec![phi, theta, psi]
    }

    pub fn cartesian_mass(&self) -> Mat<f64> {
        self.cart_mass.clone()
    }

    /// `V = m g z_cm`, the centre of mass being an affine combination of the
    /// tracked points.
    pub fn cartesian_potential<S: Scalar>(&self, x: &[S]) -> S {
        let mut z = S::zero();
        for k in 0..4 {
            z += x[3 * k + 2] * self.cm_weights[k];
        }
        z * (self.p.mass * self.p.gravity)
    }
}

/// Second moments `∫ρ (b−c)_i² dm` from principal moments of inertia.
pub(crate) fn second_moments(i: [f64; 3]) -> [f64; 3] {
    [(i[1] + i[2] - i[0]) / 2.0, (i[0] + i[2] - i[1]) / 2.0, (i[0] + i[1] - i[2]) / 2.0]
}

/// Constant Cartesian mass matrix for a rigid body tracked by four points.
///
/// Any body point is the affine combination `w(b) = B⁻¹ (b, 1)` of the
/// tracked points, so the kinetic energy is `½ Σ_jk N_jk ẋ_j·ẋ_k` with
/// `N = B⁻¹ [[J + m c cᵀ, m c], [m cᵀ, m]] B⁻ᵀ`; the 12×12 matrix is
/// `N ⊗ I₃`.
pub fn body_point_mass<S: Scalar>(binv: &Mat<f64>, mass: S, second: [S; 3], cm: [S; 3]) -> Mat<S> {
    let mut inner = Mat::zeros(4, 4);
    for i in 0..3 {
        for j in 0..3 {
            let mut v = cm[i] * cm[j] * mass;
            if i == j {
                v += second[i];
            }
            inner[(i, j)] = v;
        }
        inner[(i, 3)] = cm[i] * mass;
        inner[(3, i)] = cm[i] * mass;
    }
    inner[(3, 3)] = mass;
    let b = binv.map(S::cst);
    let n = b.matmul(&inner).matmul(&b.transpose());
    let mut m = Mat::zeros(12, 12);
    for j in 0..4 {
        for k in 0..4 {
            for a in 0..3 {
                m[(3 * j + a, 3 * k + a)] = n[(j, k)];
            }
        }
    }
    m
}

impl Constraints for Gyroscope {
    fn count(&self) -> usize {
        9
    }

    fn dim(&self) -> usize {
        12
    }

    /// Pivot pinned at the origin, then `½(‖x_a − x_b‖² − ‖a_a − a_b‖²)` for
    /// every pair.
    fn residual<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let mut r = vec![x[0], x[1], x[2]];
        for (k, &(a, b)) in PAIRS.iter().enumerate() {
            let mut s = S::zero();
            for i in 0..3 {
                let d = x[3 * a + i] - x[3 * b + i];
                s += d * d;
            }
            r.push((s - self.rest_sq[k]) * 0.5);
        }
        r
    }

    fn jacobian<S: Scalar>(&self, x: &[S]) -> Mat<S> {
        let mut g = Mat::zeros(9, 12);
        for i in 0..3 {
            g[(i, i)] = S::one();
        }
        for (k, &(a, b)) in PAIRS.iter().enumerate() {
            for i in 0..3 {
                let d = x[3 * a + i] - x[3 * b + i];
                g[(3 + k, 3 * a + i)] = d;
                g[(3 + k, 3 * b + i)] = -d;
            }
        }
        g
    }
}
