//! Analytic dynamics: the unconstrained and constrained Lagrangian and
//! Hamiltonian vector fields, and the ground-truth physical systems.
//!
//! Every callable (mass matrix, potential, Lagrangian, Hamiltonian,
//! constraints) is a trait with a method generic over the scalar type, so the
//! operators can push nested dual numbers through it to get first and second
//! input derivatives while the outer scalar stays on the caller's tape.

mod gyroscope;
mod operators;
mod pendulum;
mod system;

pub use gyroscope::{body_point_mass, Gyroscope, GyroscopeParams};
pub(crate) use gyroscope::second_moments;
pub use operators::{
    constrained_hamiltonian_field, constrained_lagrangian_accel, euler_lagrange_accel,
    hamiltonian_field, mass_jacobian, potential_gradient, structured_hamiltonian_field,
    structured_lagrangian_accel, StructuredHamiltonian, StructuredLagrangian, COND_LIMIT,
};
pub use pendulum::{Pendulum, PendulumParams};
pub use system::{
    AnalyticCartesianPotential, AnalyticMass, AnalyticPotential, Chart, System, SystemConfig,
};

use crate::diffcore::{Dual, Scalar};
use crate::error::Result;
use crate::linalg::Mat;

/// `q ↦ M(q)`, symmetric positive definite.
pub trait MassMatrix<L: Scalar> {
    fn mass<S: Scalar<Leaf = L>>(&self, q: &[S]) -> Result<Mat<S>>;
}

/// `q ↦ V(q)` (or `x ↦ V(x)` in the Cartesian chart).
pub trait Potential<L: Scalar> {
    fn potential<S: Scalar<Leaf = L>>(&self, q: &[S]) -> Result<S>;
}

pub trait Lagrangian<L: Scalar> {
    fn lagrangian<S: Scalar<Leaf = L>>(&self, q: &[S], qd: &[S]) -> Result<S>;
}

pub trait Hamiltonian<L: Scalar> {
    fn hamiltonian<S: Scalar<Leaf = L>>(&self, q: &[S], p: &[S]) -> Result<S>;
}

/// Holonomic constraints `Φ(x) = 0` on Cartesian coordinates.
pub trait Constraints {
    /// Number of constraints `K`.
    fn count(&self) -> usize;
    /// Cartesian dimension `D`.
    fn dim(&self) -> usize;
    fn residual<S: Scalar>(&self, x: &[S]) -> Vec<S>;
    /// `G = D_xΦ`, `K × D`.
    fn jacobian<S: Scalar>(&self, x: &[S]) -> Mat<S>;
    /// `Ġ = D_x Φ̇` where `Φ̇ = G ẋ`; by default one dual pass of the
    /// Jacobian along `ẋ`.
    fn jacobian_dot<S: Scalar>(&self, x: &[S], xd: &[S]) -> Mat<S> {
        let g = self.jacobian(&Dual::seed(x, xd));
        g.map(|v| v.tangent)
    }
}
