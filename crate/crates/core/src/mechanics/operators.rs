//! The six dynamics forms.
//!
//! Unconstrained (generalized coordinates):
//! * `euler_lagrange_accel`: any Lagrangian, Hessian solve.
//! * `structured_lagrangian_accel`: `L = ½q̇ᵀM(q)q̇ − V(q)`.
//! * `hamiltonian_field`: any Hamiltonian, `(∇_pH, −∇_qH)`.
//! * `structured_hamiltonian_field`: `H = ½pᵀM(q)⁻¹p + V(q)`.
//!
//! Constrained (Cartesian coordinates, constant mass):
//! * `constrained_lagrangian_accel`: multiplier solve on `G M⁻¹ Gᵀ`.
//! * `constrained_hamiltonian_field`: projection with `Ψ = (Φ, Φ̇)`.

use super::{Constraints, Hamiltonian, Lagrangian, MassMatrix, Potential};
use crate::diffcore::{dot, values, Dual, Scalar};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, Cholesky, Lu, Mat};

/// Linear systems whose 1-norm condition number exceeds this are rejected.
pub const COND_LIMIT: f64 = 1e12;

fn state_of<T: Scalar>(a: &[T], b: &[T]) -> Vec<f64> {
    let mut s = values(a);
    s.extend(values(b));
    s
}

fn singular(reason: impl Into<String>, state: Vec<f64>) -> Error {
    Error::SingularDynamics { reason: reason.into(), state }
}

fn degenerate(reason: impl Into<String>, state: Vec<f64>) -> Error {
    Error::ConstraintDegeneracy { reason: reason.into(), state }
}

/// Cholesky factor of a mass-like matrix, refusing non-PD or ill-conditioned
/// input.
fn mass_factor<T: Scalar>(m: &Mat<T>, what: &str, state: impl Fn() -> Vec<f64>) -> Result<Cholesky<T>> {
    let mv = m.values();
    if mv.data().iter().any(|v| !v.is_finite()) {
        return Err(singular(format!("{what} has non-finite entries"), state()));
    }
    let chol = Cholesky::factor(m).map_err(|e| singular(format!("{what}: {e}"), state()))?;
    let cond = condition_number(&mv);
    if !(cond <= COND_LIMIT) {
        return Err(singular(format!("{what} condition number {cond:.3e}"), state()));
    }
    Ok(chol)
}

/// `M(q)` and its partial derivatives `∂M/∂q_k`, one dual pass per coordinate.
pub fn mass_jacobian<T, M>(m: &M, q: &[T]) -> Result<(Mat<T>, Vec<Mat<T>>)>
where
    T: Scalar,
    M: MassMatrix<T::Leaf>,
{
    if q.is_empty() {
        return Ok((m.mass(q)?, Vec::new()));
    }
    let mut base = None;
    let mut parts = Vec::with_capacity(q.len());
    for k in 0..q.len() {
        let md = m.mass(&Dual::seed_axis(q, k))?;
        if base.is_none() {
            base = Some(md.map(|v| v.primal));
        }
        parts.push(md.map(|v| v.tangent));
    }
    Ok((base.expect("non-empty q"), parts))
}

/// `V(q)` and `∇V(q)`.
pub fn potential_gradient<T, V>(v: &V, q: &[T]) -> Result<(T, Vec<T>)>
where
    T: Scalar,
    V: Potential<T::Leaf>,
{
    if q.is_empty() {
        return Ok((v.potential(q)?, Vec::new()));
    }
    let mut val = T::zero();
    let mut grad = Vec::with_capacity(q.len());
    for k in 0..q.len() {
        let y = v.potential(&Dual::seed_axis(q, k))?;
        val = y.primal;
        grad.push(y.tangent);
    }
    Ok((val, grad))
}

/// `q̈ = (∇_q̇∇_q̇ᵀL)⁻¹ [∇_qL − (∇_q∇_q̇ᵀL) q̇]`.
pub fn euler_lagrange_accel<T, F>(l: &F, q: &[T], qd: &[T]) -> Result<Vec<T>>
where
    T: Scalar,
    F: Lagrangian<T::Leaf>,
{
    let n = q.len();
    assert_eq!(qd.len(), n, "q and q̇ lengths differ");
    let zero = T::zero();
    let one = T::one();

    // ∇_q L
    let qd1 = Dual::lift(qd);
    let mut grad_q = Vec::with_capacity(n);
    for k in 0..n {
        grad_q.push(l.lagrangian(&Dual::seed_axis(q, k), &qd1)?.tangent);
    }

    // Hessian in q̇ (upper triangle, mirrored) and the mixed term, both from
    // forward-over-forward passes with the outer tangent on q̇_i.
    let q_const: Vec<Dual<Dual<T>>> = q.iter().map(|&v| Dual::constant(Dual::constant(v))).collect();
    let q_along_qd: Vec<Dual<Dual<T>>> = q
        .iter()
        .zip(qd)
        .map(|(&v, &d)| Dual::new(Dual::new(v, d), Dual::constant(zero)))
        .collect();
    let mut hess = Mat::zeros(n, n);
    let mut mixed = vec![zero; n];
    for i in 0..n {
        let outer = |m: usize| if m == i { one } else { zero };
        for j in i..n {
            let qdv: Vec<Dual<Dual<T>>> = qd
                .iter()
                .enumerate()
                .map(|(m, &v)| {
                    let inner = if m == j { one } else { zero };
                    Dual::new(Dual::new(v, inner), Dual::new(outer(m), zero))
                })
                .collect();
            let h = l.lagrangian(&q_const, &qdv)?.tangent.tangent;
            hess[(i, j)] = h;
            hess[(j, i)] = h;
        }
        let qdv: Vec<Dual<Dual<T>>> = qd
            .iter()
            .enumerate()
            .map(|(m, &v)| Dual::new(Dual::constant(v), Dual::new(outer(m), zero)))
            .collect();
        mixed[i] = l.lagrangian(&q_along_qd, &qdv)?.tangent.tangent;
    }

    let rhs: Vec<T> = grad_q.iter().zip(&mixed).map(|(&g, &c)| g - c).collect();
    let hv = hess.values();
    let state = || state_of(q, qd);
    if hv.data().iter().any(|v| !v.is_finite()) {
        return Err(singular("Lagrangian Hessian has non-finite entries", state()));
    }
    let cond = condition_number(&hv);
    if !(cond <= COND_LIMIT) {
        return Err(singular(format!("Lagrangian Hessian condition number {cond:.3e}"), state()));
    }
    let lu = Lu::factor(&hess).map_err(|e| singular(format!("Lagrangian Hessian: {e}"), state()))?;
    Ok(lu.solve(&rhs))
}

/// `q̈ = M⁻¹ [∇_q(½q̇ᵀMq̇) − ∇V − Ṁq̇]` with `Ṁ = Σ_k (∂M/∂q_k) q̇_k`.
pub fn structured_lagrangian_accel<T, M, V>(m: &M, v: &V, q: &[T], qd: &[T]) -> Result<Vec<T>>
where
    T: Scalar,
    M: MassMatrix<T::Leaf>,
    V: Potential<T::Leaf>,
{
    let n = q.len();
    assert_eq!(qd.len(), n, "q and q̇ lengths differ");
    let (mass, dm) = mass_jacobian(m, q)?;
    let (_, dv) = potential_gradient(v, q)?;
    let chol = mass_factor(&mass, "mass matrix", || state_of(q, qd))?;

    let mut mdot = Mat::zeros(n, n);
    for (k, dmk) in dm.iter().enumerate() {
        mdot = mdot.add(&dmk.map(|e| e * qd[k]));
    }
    let coriolis = mdot.matvec(qd);
    let rhs: Vec<T> = (0..n)
        .map(|k| dot(qd, &dm[k].matvec(qd)) * 0.5 - dv[k] - coriolis[k])
        .collect();
    Ok(chol.solve(&rhs))
}

/// `(q̇, ṗ) = (∇_pH, −∇_qH)`, concatenated.
pub fn hamiltonian_field<T, F>(h: &F, q: &[T], p: &[T]) -> Result<Vec<T>>
where
    T: Scalar,
    F: Hamiltonian<T::Leaf>,
{
    let n = q.len();
    assert_eq!(p.len(), n, "q and p lengths differ");
    let q1 = Dual::lift(q);
    let p1 = Dual::lift(p);
    let mut out = vec![T::zero(); 2 * n];
    for k in 0..n {
        out[k] = h.hamiltonian(&q1, &Dual::seed_axis(p, k))?.tangent;
        out[n + k] = -h.hamiltonian(&Dual::seed_axis(q, k), &p1)?.tangent;
    }
    Ok(out)
}

/// `q̇ = M⁻¹p`, `ṗ = −½∇_q(pᵀM⁻¹p) − ∇V`, concatenated.
///
/// `∂_k(pᵀM⁻¹p) = −q̇ᵀ(∂_kM)q̇`, so only derivatives of `M` itself are needed.
pub fn structured_hamiltonian_field<T, M, V>(m: &M, v: &V, q: &[T], p: &[T]) -> Result<Vec<T>>
where
    T: Scalar,
    M: MassMatrix<T::Leaf>,
    V: Potential<T::Leaf>,
{
    let n = q.len();
    assert_eq!(p.len(), n, "q and p lengths differ");
    let (mass, dm) = mass_jacobian(m, q)?;
    let (_, dv) = potential_gradient(v, q)?;
    let chol = mass_factor(&mass, "mass matrix", || state_of(q, p))?;
    let qd = chol.solve(p);
    let mut out = qd.clone();
    for k in 0..n {
        out.push(dot(&qd, &dm[k].matvec(&qd)) * 0.5 - dv[k]);
    }
    Ok(out)
}

/// `ẍ = M⁻¹(f + Gᵀλ)` with `f = −∇V` and `(G M⁻¹ Gᵀ) λ = −Ġẋ − G M⁻¹ f`.
pub fn constrained_lagrangian_accel<T, V, C>(
    mass: &Mat<T>,
    v: &V,
    c: &C,
    x: &[T],
    xd: &[T],
) -> Result<Vec<T>>
where
    T: Scalar,
    V: Potential<T::Leaf>,
    C: Constraints,
{
    let d = x.len();
    assert_eq!(xd.len(), d, "x and ẋ lengths differ");
    let state = || state_of(x, xd);
    let chol = mass_factor(mass, "Cartesian mass matrix", state)?;
    let (_, dv) = potential_gradient(v, x)?;
    let force: Vec<T> = dv.iter().map(|&g| -g).collect();
    let g = c.jacobian(x);
    let gdot = c.jacobian_dot(x, xd);

    let minv_f = chol.solve(&force);
    let minv_gt = chol.solve_mat(&g.transpose());
    let schur = g.matmul(&minv_gt);
    let gdot_xd = gdot.matvec(xd);
    let g_minv_f = g.matvec(&minv_f);
    let rhs: Vec<T> = gdot_xd.iter().zip(&g_minv_f).map(|(&a, &b)| -a - b).collect();

    let sv = schur.values();
    let cond = condition_number(&sv);
    if !(cond <= COND_LIMIT) {
        return Err(degenerate(format!("G M⁻¹ Gᵀ condition number {cond:.3e}"), state()));
    }
    let lam = Cholesky::factor(&schur)
        .map_err(|e| degenerate(format!("G M⁻¹ Gᵀ: {e}"), state()))?
        .solve(&rhs);
    let corr = minv_gt.matvec(&lam);
    Ok(minv_f.iter().zip(&corr).map(|(&a, &b)| a + b).collect())
}

/// `ż = J∇H − J Pᵀ (P J Pᵀ)⁻¹ P J ∇H` for `z = (x, p)`, with
/// `H = ½pᵀM⁻¹p + V(x)` and `P = D_zΨ` having rows `[G, 0]` and
/// `[Ġ, G M⁻¹]`.
pub fn constrained_hamiltonian_field<T, V, C>(mass: &Mat<T>, v: &V, c: &C, z: &[T]) -> Result<Vec<T>>
where
    T: Scalar,
    V: Potential<T::Leaf>,
    C: Constraints,
{
    let d = c.dim();
    let k = c.count();
    assert_eq!(z.len(), 2 * d, "state length must be twice the Cartesian dimension");
    let (x, p) = z.split_at(d);
    let state = || state_of(x, p);
    let chol = mass_factor(mass, "Cartesian mass matrix", state)?;
    let xd = chol.solve(p);
    let (_, dv) = potential_gradient(v, x)?;
    let g = c.jacobian(x);
    let gdot = c.jacobian_dot(x, &xd);
    let g_minv = chol.solve_mat(&g.transpose()).transpose();

    let mut pm = Mat::zeros(2 * k, 2 * d);
    pm.set_block(0, 0, &g);
    pm.set_block(k, 0, &gdot);
    pm.set_block(k, d, &g_minv);

    // J∇H = (M⁻¹p, −∇V)
    let mut w = xd.clone();
    w.extend(dv.iter().map(|&g| -g));
    let r = pm.matvec(&w);

    // P J has rows [−B, A] for P rows [A, B].
    let pj = Mat::from_fn(2 * k, 2 * d, |i, j| if j < d { -pm[(i, j + d)] } else { pm[(i, j - d)] });
    let a = pj.matmul(&pm.transpose());
    let av = a.values();
    let cond = condition_number(&av);
    if !(cond <= COND_LIMIT) {
        return Err(degenerate(format!("P J Pᵀ condition number {cond:.3e}"), state()));
    }
    let mu = Lu::factor(&a).map_err(|e| degenerate(format!("P J Pᵀ: {e}"), state()))?.solve(&r);
    let pt_mu = pm.tr_matvec(&mu);
    // J y = (y_p, −y_x)
    let mut out = Vec::with_capacity(2 * d);
    for i in 0..d {
        out.push(w[i] - pt_mu[d + i]);
    }
    for i in 0..d {
        out.push(w[d + i] + pt_mu[i]);
    }
    Ok(out)
}

/// `L = ½q̇ᵀM(q)q̇ − V(q)` assembled from its parts.
pub struct StructuredLagrangian<'a, M, V> {
    pub mass: &'a M,
    pub potential: &'a V,
}

impl<'a, L: Scalar, M: MassMatrix<L>, V: Potential<L>> Lagrangian<L> for StructuredLagrangian<'a, M, V> {
    fn lagrangian<S: Scalar<Leaf = L>>(&self, q: &[S], qd: &[S]) -> Result<S> {
        let m = self.mass.mass(q)?;
        Ok(dot(qd, &m.matvec(qd)) * 0.5 - self.potential.potential(q)?)
    }
}

/// `H = ½pᵀM(q)⁻¹p + V(q)` assembled from its parts.
pub struct StructuredHamiltonian<'a, M, V> {
    pub mass: &'a M,
    pub potential: &'a V,
}

impl<'a, L: Scalar, M: MassMatrix<L>, V: Potential<L>> Hamiltonian<L> for StructuredHamiltonian<'a, M, V> {
    fn hamiltonian<S: Scalar<Leaf = L>>(&self, q: &[S], p: &[S]) -> Result<S> {
        let m = self.mass.mass(q)?;
        let chol = mass_factor(&m, "mass matrix", || state_of(q, p))?;
        Ok(dot(p, &chol.solve(p)) * 0.5 + self.potential.potential(q)?)
    }
}
