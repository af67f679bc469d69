//! Input derivatives of scalar functions by forward-mode passes.
//!
//! The outer scalar `T` can itself be a tape variable, so every gradient and
//! Hessian entry produced here stays differentiable with respect to whatever
//! `T` depends on (network parameters, rollout states).

use super::dual::Dual;
use super::scalar::Scalar;
use crate::error::Result;
use crate::linalg::Mat;

/// A scalar function that can be evaluated at any scalar type sharing the
/// leaf type `L`, which is what lets the derivative helpers nest duals on top
/// of it.
pub trait ScalarFn<L: Scalar> {
    fn call<S: Scalar<Leaf = L>>(&self, x: &[S]) -> Result<S>;
}

/// `f(x)` and `∇f(x)`, one dual pass per coordinate.
pub fn value_and_gradient<T, F>(f: &F, x: &[T]) -> Result<(T, Vec<T>)>
where
    T: Scalar,
    F: ScalarFn<T::Leaf>,
{
    if x.is_empty() {
        return Ok((f.call(x)?, Vec::new()));
    }
    let mut value = T::zero();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let y = f.call(&Dual::seed_axis(x, k))?;
        value = y.primal;
        grad.push(y.tangent);
    }
    Ok((value, grad))
}

pub fn input_gradient<T, F>(f: &F, x: &[T]) -> Result<Vec<T>>
where
    T: Scalar,
    F: ScalarFn<T::Leaf>,
{
    value_and_gradient(f, x).map(|(_, g)| g)
}

/// Directional derivative `∇f(x)·v` in a single pass.
pub fn directional_derivative<T, F>(f: &F, x: &[T], v: &[T]) -> Result<T>
where
    T: Scalar,
    F: ScalarFn<T::Leaf>,
{
    Ok(f.call(&Dual::seed(x, v))?.tangent)
}

/// Second directional derivative `uᵀ ∇²f(x) v` in a single nested pass.
pub fn second_directional<T, F>(f: &F, x: &[T], u: &[T], v: &[T]) -> Result<T>
where
    T: Scalar,
    F: ScalarFn<T::Leaf>,
{
    let xs: Vec<Dual<Dual<T>>> = x
        .iter()
        .zip(u)
        .zip(v)
        .map(|((&p, &du), &dv)| Dual::new(Dual::new(p, dv), Dual::new(du, T::zero())))
        .collect();
    Ok(f.call(&xs)?.tangent.tangent)
}

/// Symmetric Hessian by forward-over-forward passes over the upper triangle.
pub fn input_hessian<T, F>(f: &F, x: &[T]) -> Result<Mat<T>>
where
    T: Scalar,
    F: ScalarFn<T::Leaf>,
{
    let n = x.len();
    let mut h = Mat::zeros(n, n);
    let mut u = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    for i in 0..n {
        u[i] = T::one();
        for j in i..n {
            v[j] = T::one();
            let hij = second_directional(f, x, &u, &v)?;
            h[(i, j)] = hij;
            h[(j, i)] = hij;
            v[j] = T::zero();
        }
        u[i] = T::zero();
    }
    Ok(h)
}
