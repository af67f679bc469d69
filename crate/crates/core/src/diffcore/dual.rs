//! Forward-mode dual numbers, nestable over any [`Scalar`].
//!
//! `Dual<T>` carries a primal and one directional derivative. Nesting
//! (`Dual<Dual<T>>`) yields second directional derivatives, which is how
//! input Hessians are formed without a higher-order reverse engine.

use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub struct Dual<T> {
    pub primal: T,
    pub tangent: T,
}

impl<T: Scalar> Dual<T> {
    pub fn new(primal: T, tangent: T) -> Self {
        Dual { primal, tangent }
    }

    /// A value that does not vary along the seeded direction.
    pub fn constant(primal: T) -> Self {
        Dual { primal, tangent: T::zero() }
    }

    /// Seed `x` with unit tangent.
    pub fn variable(primal: T) -> Self {
        Dual { primal, tangent: T::one() }
    }

    /// Lift a slice and seed it with the direction `dir`.
    pub fn seed(x: &[T], dir: &[T]) -> Vec<Self> {
        x.iter().zip(dir).map(|(&p, &t)| Dual::new(p, t)).collect()
    }

    /// Lift a slice with unit tangent on coordinate `k` only.
    pub fn seed_axis(x: &[T], k: usize) -> Vec<Self> {
        x.iter()
            .enumerate()
            .map(|(i, &p)| if i == k { Dual::variable(p) } else { Dual::constant(p) })
            .collect()
    }

    pub fn lift(x: &[T]) -> Vec<Self> {
        x.iter().map(|&p| Dual::constant(p)).collect()
    }
}

impl<T: Scalar> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual::new(self.primal + o.primal, self.tangent + o.tangent)
    }
}

impl<T: Scalar> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual::new(self.primal - o.primal, self.tangent - o.tangent)
    }
}

impl<T: Scalar> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual::new(
            self.primal * o.primal,
            self.primal * o.tangent + o.primal * self.tangent,
        )
    }
}

impl<T: Scalar> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let q = self.primal / o.primal;
        Dual::new(q, (self.tangent - q * o.tangent) / o.primal)
    }
}

impl<T: Scalar> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.primal, -self.tangent)
    }
}

impl<T: Scalar> Add<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        Dual::new(self.primal + c, self.tangent)
    }
}

impl<T: Scalar> Sub<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, c: f64) -> Self {
        Dual::new(self.primal - c, self.tangent)
    }
}

impl<T: Scalar> Mul<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        Dual::new(self.primal * c, self.tangent * c)
    }
}

impl<T: Scalar> Div<f64> for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        Dual::new(self.primal / c, self.tangent / c)
    }
}

impl<T: Scalar> AddAssign for Dual<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Scalar> SubAssign for Dual<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Scalar> MulAssign for Dual<T> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<T: Scalar> Scalar for Dual<T> {
    type Leaf = T::Leaf;

    fn cst(v: f64) -> Self {
        Dual::constant(T::cst(v))
    }

    fn from_leaf(l: T::Leaf) -> Self {
        Dual::constant(T::from_leaf(l))
    }

    fn value(&self) -> f64 {
        self.primal.value()
    }

    fn sin(self) -> Self {
        Dual::new(self.primal.sin(), self.primal.cos() * self.tangent)
    }

    fn cos(self) -> Self {
        Dual::new(self.primal.cos(), -(self.primal.sin() * self.tangent))
    }

    fn exp(self) -> Self {
        let e = self.primal.exp();
        Dual::new(e, e * self.tangent)
    }

    fn ln(self) -> Self {
        Dual::new(self.primal.ln(), self.tangent / self.primal)
    }

    fn sqrt(self) -> Self {
        let r = self.primal.sqrt();
        Dual::new(r, self.tangent / (r * 2.0))
    }

    fn abs(self) -> Self {
        let v = self.primal.value();
        if v > 0.0 {
            self
        } else if v < 0.0 {
            -self
        } else {
            Dual::new(self.primal.abs(), T::zero())
        }
    }

    fn softplus(self) -> Self {
        Dual::new(self.primal.softplus(), self.primal.sigmoid() * self.tangent)
    }

    fn sigmoid(self) -> Self {
        let s = self.primal.sigmoid();
        Dual::new(s, s * (T::one() - s) * self.tangent)
    }

    fn affine(w: &[T::Leaf], b: Option<&[T::Leaf]>, x: &[Self]) -> Vec<Self> {
        let p: Vec<T> = x.iter().map(|d| d.primal).collect();
        let t: Vec<T> = x.iter().map(|d| d.tangent).collect();
        let yp = T::affine(w, b, &p);
        let yt = T::affine(w, None, &t);
        yp.into_iter().zip(yt).map(|(p, t)| Dual::new(p, t)).collect()
    }
}
