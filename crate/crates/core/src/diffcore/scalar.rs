//! The numeric abstraction every differentiable computation is written against.
//!
//! Model and mechanics code is generic over [`Scalar`], so the same source runs
//! on plain `f64` (simulation, evaluation), on forward-mode [`Dual`](super::Dual)
//! numbers (input derivatives) and on reverse-mode [`Var`](super::Var) nodes
//! (parameter gradients), in any nesting of the three.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Overflow-safe `ln(1 + e^x)`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function, the derivative of [`softplus`].
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    /// The innermost scalar type: the one network parameters are stored as.
    type Leaf: Scalar<Leaf = Self::Leaf>;

    fn cst(v: f64) -> Self;
    fn from_leaf(l: Self::Leaf) -> Self;
    /// Primal value.
    fn value(&self) -> f64;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    /// Absolute value with subgradient 0 at the origin.
    fn abs(self) -> Self;
    fn softplus(self) -> Self;
    fn sigmoid(self) -> Self;

    /// `W x + b` for a row-major `W` with `x.len()` columns.
    fn affine(w: &[Self::Leaf], b: Option<&[Self::Leaf]>, x: &[Self]) -> Vec<Self>;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn one() -> Self {
        Self::cst(1.0)
    }

    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::one(),
            1 => self,
            2 => self * self,
            n if n < 0 => Self::one() / self.powi(-n),
            n => {
                let half = self.powi(n / 2);
                if n % 2 == 0 {
                    half * half
                } else {
                    half * half * self
                }
            }
        }
    }

    fn recip(self) -> Self {
        Self::one() / self
    }

    fn is_finite(&self) -> bool {
        self.value().is_finite()
    }
}

impl Scalar for f64 {
    type Leaf = f64;

    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn from_leaf(l: f64) -> Self {
        l
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn softplus(self) -> Self {
        softplus(self)
    }
    #[inline]
    fn sigmoid(self) -> Self {
        sigmoid(self)
    }

    fn affine(w: &[f64], b: Option<&[f64]>, x: &[f64]) -> Vec<f64> {
        affine_f64(w, b, x)
    }
}

/// Dense `W x + b`; the summation order here is the reference order every
/// other scalar type reproduces bit-for-bit in its primal.
pub(crate) fn affine_f64(w: &[f64], b: Option<&[f64]>, x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    let rows = if cols == 0 { 0 } else { w.len() / cols };
    debug_assert_eq!(rows * cols, w.len());
    (0..rows)
        .map(|i| {
            let row = &w[i * cols..(i + 1) * cols];
            let mut acc = 0.0;
            for (wij, xj) in row.iter().zip(x) {
                acc += wij * xj;
            }
            match b {
                Some(b) => acc + b[i],
                None => acc,
            }
        })
        .collect()
}

/// Euclidean dot product over any scalar.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

pub fn lift<S: Scalar>(v: &[f64]) -> Vec<S> {
    v.iter().map(|&x| S::cst(x)).collect()
}

pub fn values<S: Scalar>(v: &[S]) -> Vec<f64> {
    v.iter().map(Scalar::value).collect()
}
