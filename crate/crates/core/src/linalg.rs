//! Small dense matrices and factorizations over any [`Scalar`].
//!
//! Pivot choices are made on primal values, so the same factorization path is
//! taken by `f64`, dual and tape scalars and their primals agree bit-for-bit.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::diffcore::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinalgError {
    NotPositiveDefinite,
    Singular,
}

impl fmt::Display for LinalgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinalgError::NotPositiveDefinite => f.write_str("matrix is not positive definite"),
            LinalgError::Singular => f.write_str("matrix is singular"),
        }
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S> Index<(usize, usize)> for Mat<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for Mat<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

impl<S: Scalar> Mat<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn diag(d: &[S]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn matvec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows)
            .map(|i| {
                let mut acc = S::zero();
                for (a, &b) in self.row(i).iter().zip(x) {
                    acc += *a * b;
                }
                acc
            })
            .collect()
    }

    /// `selfᵀ x`.
    pub fn tr_matvec(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.rows, "tr_matvec dimension");
        let mut out = vec![S::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o += a * xi;
            }
        }
        out
    }

    pub fn matmul(&self, o: &Mat<S>) -> Mat<S> {
        assert_eq!(self.cols, o.rows, "matmul dimension");
        let mut out = Mat::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..o.cols {
                    out[(i, j)] += a * o[(k, j)];
                }
            }
        }
        out
    }

    pub fn add(&self, o: &Mat<S>) -> Mat<S> {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols));
        Mat::from_vec(
            self.rows,
            self.cols,
            self.data.iter().zip(&o.data).map(|(&a, &b)| a + b).collect(),
        )
    }

    pub fn scale(&self, c: f64) -> Mat<S> {
        Mat::from_vec(self.rows, self.cols, self.data.iter().map(|&a| a * c).collect())
    }

    pub fn map<T>(&self, f: impl Fn(S) -> T) -> Mat<T> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&a| f(a)).collect() }
    }

    pub fn values(&self) -> Mat<f64> {
        self.map(|a| a.value())
    }

    /// Copy `block` into `self` with its top-left corner at `(r, c)`.
    pub fn set_block(&mut self, r: usize, c: usize, block: &Mat<S>) {
        for i in 0..block.rows {
            for j in 0..block.cols {
                self[(r + i, c + j)] = block[(i, j)];
            }
        }
    }
}

impl Mat<f64> {
    pub fn norm1(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, o: &Mat<f64>) -> f64 {
        self.data.iter().zip(&o.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

/// `A = L Lᵀ` for symmetric positive definite `A`.
#[derive(Clone, Debug)]
pub struct Cholesky<S> {
    l: Mat<S>,
}

impl<S: Scalar> Cholesky<S> {
    pub fn factor(a: &Mat<S>) -> Result<Self, LinalgError> {
        assert_eq!(a.rows, a.cols, "cholesky of non-square matrix");
        let n = a.rows;
        let mut l = Mat::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d.value() > 0.0) {
                return Err(LinalgError::NotPositiveDefinite);
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn factor_l(&self) -> &Mat<S> {
        &self.l
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.l.rows;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    /// Solve for every column of `b`.
    pub fn solve_mat(&self, b: &Mat<S>) -> Mat<S> {
        let bt = b.transpose();
        let cols: Vec<Vec<S>> = (0..b.cols).map(|j| self.solve(bt.row(j))).collect();
        Mat::from_fn(b.rows, b.cols, |i, j| cols[j][i])
    }
}

/// LU factorization with complete (row and column) pivoting.
#[derive(Clone, Debug)]
pub struct Lu<S> {
    lu: Mat<S>,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
}

impl<S: Scalar> Lu<S> {
    pub fn factor(a: &Mat<S>) -> Result<Self, LinalgError> {
        assert_eq!(a.rows, a.cols, "LU of non-square matrix");
        let n = a.rows;
        let mut lu = a.clone();
        let mut row_perm: Vec<usize> = (0..n).collect();
        let mut col_perm: Vec<usize> = (0..n).collect();
        let scale = a.data.iter().map(|v| v.value().abs()).fold(0.0, f64::max);
        for k in 0..n {
            let (mut pi, mut pj, mut best) = (k, k, -1.0);
            for i in k..n {
                for j in k..n {
                    let v = lu[(i, j)].value().abs();
                    if v > best {
                        best = v;
                        pi = i;
                        pj = j;
                    }
                }
            }
            if !(best > scale * 1e-300) || best == 0.0 {
                return Err(LinalgError::Singular);
            }
            if pi != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(pi, j)];
                    lu[(pi, j)] = t;
                }
                row_perm.swap(k, pi);
            }
            if pj != k {
                for i in 0..n {
                    let t = lu[(i, k)];
                    lu[(i, k)] = lu[(i, pj)];
                    lu[(i, pj)] = t;
                }
                col_perm.swap(k, pj);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                for j in k + 1..n {
                    let t = lu[(k, j)];
                    lu[(i, j)] -= f * t;
                }
            }
        }
        Ok(Lu { lu, row_perm, col_perm })
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.lu.rows;
        let mut y: Vec<S> = self.row_perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lu[(i, k)] * y[k];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.lu[(i, k)] * y[k];
            }
            y[i] = s / self.lu[(i, i)];
        }
        let mut x = vec![S::zero(); n];
        for (k, &j) in self.col_perm.iter().enumerate() {
            x[j] = y[k];
        }
        x
    }
}

/// 1-norm condition number `‖A‖₁ ‖A⁻¹‖₁`, computed exactly (matrices here
/// are at most a few dozen rows). Singular matrices report infinity.
pub fn condition_number(a: &Mat<f64>) -> f64 {
    let n = a.rows;
    let lu = match Lu::factor(a) {
        Ok(lu) => lu,
        Err(_) => return f64::INFINITY,
    };
    let mut inv_norm: f64 = 0.0;
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = lu.solve(&e);
        let s: f64 = col.iter().map(|v| v.abs()).sum();
        if !s.is_finite() {
            return f64::INFINITY;
        }
        inv_norm = inv_norm.max(s);
    }
    a.norm1() * inv_norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spd(n: usize, seed: &[f64]) -> Mat<f64> {
        let b = Mat::from_fn(n, n, |i, j| seed[(i * n + j) % seed.len()] + (i as f64) * 0.1);
        b.matmul(&b.transpose()).add(&Mat::identity(n).scale(0.5))
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Mat::from_vec(2, 2, vec![1.0, 2.0, 2.0, 1.0]);
        assert_eq!(Cholesky::factor(&a).unwrap_err(), LinalgError::NotPositiveDefinite);
    }

    #[test]
    fn lu_rejects_singular() {
        let a = Mat::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        let r = Lu::factor(&a);
        assert!(r.is_err() || condition_number(&a) > 1e15);
    }

    #[test]
    fn condition_of_diagonal() {
        let a = Mat::diag(&[1.0, 1e-3, 10.0]);
        assert!((condition_number(&a) - 1e4).abs() < 1e-8);
    }

    #[test]
    fn lu_handles_antisymmetric_blocks() {
        // [[0, S], [-S, W]] as produced by constrained Hamiltonian multipliers
        let a = Mat::from_vec(
            4,
            4,
            vec![
                0.0, 0.0, 2.0, 0.5, 0.0, 0.0, 0.5, 1.0, -2.0, -0.5, 0.0, 0.3, -0.5, -1.0, -0.3, 0.0,
            ],
        );
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let b = a.matvec(&x);
        let y = Lu::factor(&a).unwrap().solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn cholesky_and_lu_solve_spd(seed in prop::collection::vec(-1.0f64..1.0, 16), n in 1usize..5,
                                     rhs in prop::collection::vec(-3.0f64..3.0, 4)) {
            let a = spd(n, &seed);
            let b = &rhs[..n];
            let x1 = Cholesky::factor(&a).unwrap().solve(b);
            let x2 = Lu::factor(&a).unwrap().solve(b);
            let r1 = a.matvec(&x1);
            for i in 0..n {
                prop_assert!((r1[i] - b[i]).abs() < 1e-9);
                prop_assert!((x1[i] - x2[i]).abs() < 1e-9);
            }
        }
    }
}
