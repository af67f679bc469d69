//! Reverse-mode tape.
//!
//! Values live in one flat slot array; each recorded op writes one or more
//! consecutive slots and only references slots written before it, so a
//! single reverse sweep over the op list visits every node once in
//! topological order. Dense layers are recorded as one fused op, which keeps
//! the tape small enough to unroll whole RK4 rollouts through several
//! networks per training example.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::scalar::{affine_f64, sigmoid, softplus, Scalar};

const NO_SLOT: u32 = u32::MAX;

#[derive(Debug, Clone)]
enum Op {
    Unary {
        out: u32,
        a: u32,
        da: f64,
    },
    Binary {
        out: u32,
        a: u32,
        b: u32,
        da: f64,
        db: f64,
    },
    /// `out[0..rows] = W x + b`, `W` stored row-major in slots `w..w+rows*cols`,
    /// operand slot indices for `x` in `pool[x..x+cols]`.
    Affine {
        out: u32,
        rows: u32,
        cols: u32,
        w: u32,
        b: u32,
        x: u32,
    },
}

#[derive(Default)]
struct Inner {
    values: Vec<f64>,
    ops: Vec<Op>,
    pool: Vec<u32>,
}

impl Inner {
    fn slot(&mut self, v: f64) -> u32 {
        let idx = self.values.len();
        assert!(idx < NO_SLOT as usize, "tape overflow");
        self.values.push(v);
        idx as u32
    }
}

/// A single-threaded recording of scalar operations.
#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner = self.inner.borrow();
        f.debug_struct("Tape")
            .field("slots", &inner.values.len())
            .field("ops", &inner.ops.len())
            .finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of value slots recorded so far.
    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn op_count(&self) -> usize {
        self.inner.borrow().ops.len()
    }

    /// Register an independent variable.
    pub fn var(&self, v: f64) -> Var<'_> {
        let idx = self.inner.borrow_mut().slot(v);
        Var { tape: Some(self), idx, val: v }
    }

    /// Register a block of independent variables in consecutive slots.
    pub fn vars(&self, vs: &[f64]) -> Vec<Var<'_>> {
        let mut inner = self.inner.borrow_mut();
        vs.iter()
            .map(|&v| Var { tape: Some(self), idx: inner.slot(v), val: v })
            .collect()
    }

    fn unary(&self, val: f64, a: u32, da: f64) -> Var<'_> {
        if da == 0.0 {
            return Var::constant(val);
        }
        let mut inner = self.inner.borrow_mut();
        let out = inner.slot(val);
        inner.ops.push(Op::Unary { out, a, da });
        Var { tape: Some(self), idx: out, val }
    }

    fn binary(&self, val: f64, a: u32, da: f64, b: u32, db: f64) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        let out = inner.slot(val);
        inner.ops.push(Op::Binary { out, a, b, da, db });
        Var { tape: Some(self), idx: out, val }
    }

    /// Ensure the given vars occupy consecutive slots, copying if needed.
    fn contiguous(&self, inner: &mut Inner, vs: &[Var<'_>]) -> u32 {
        if let Some(first) = vs.first() {
            if first.tape.is_some()
                && vs
                    .iter()
                    .enumerate()
                    .all(|(k, v)| v.tape.is_some() && v.idx == first.idx + k as u32)
            {
                return first.idx;
            }
        }
        let start = inner.values.len() as u32;
        for v in vs {
            let out = inner.slot(v.val);
            if v.tape.is_some() {
                inner.ops.push(Op::Unary { out, a: v.idx, da: 1.0 });
            }
        }
        start
    }

    fn affine<'t>(
        &'t self,
        w: &[Var<'t>],
        b: Option<&[Var<'t>]>,
        x: &[Var<'t>],
    ) -> Vec<Var<'t>> {
        let wv: Vec<f64> = w.iter().map(|v| v.val).collect();
        let xv: Vec<f64> = x.iter().map(|v| v.val).collect();
        let bv: Option<Vec<f64>> = b.map(|b| b.iter().map(|v| v.val).collect());
        let out_vals = affine_f64(&wv, bv.as_deref(), &xv);

        let mut inner = self.inner.borrow_mut();
        let w_slot = self.contiguous(&mut inner, w);
        let b_slot = match b {
            Some(b) => self.contiguous(&mut inner, b),
            None => NO_SLOT,
        };
        let x_off = inner.pool.len() as u32;
        for v in x {
            let idx = if v.tape.is_some() { v.idx } else { inner.slot(v.val) };
            inner.pool.push(idx);
        }
        let out = inner.values.len() as u32;
        for &v in &out_vals {
            inner.slot(v);
        }
        inner.ops.push(Op::Affine {
            out,
            rows: out_vals.len() as u32,
            cols: x.len() as u32,
            w: w_slot,
            b: b_slot,
            x: x_off,
        });
        drop(inner);
        out_vals
            .into_iter()
            .enumerate()
            .map(|(i, val)| Var { tape: Some(self), idx: out + i as u32, val })
            .collect()
    }

    /// Reverse sweep from `root`, accumulating d root / d slot for every slot.
    ///
    /// Panics if `root` was recorded on a different tape.
    pub fn backward(&self, root: &Var<'_>) -> Gradients {
        let inner = self.inner.borrow();
        let mut adj = vec![0.0; inner.values.len()];
        match root.tape {
            None => return Gradients { adj },
            Some(t) => assert!(
                std::ptr::eq(t, self),
                "backward called with a root from another tape"
            ),
        }
        adj[root.idx as usize] = 1.0;
        let mut xbuf: Vec<f64> = Vec::new();
        let mut xadj: Vec<f64> = Vec::new();
        for op in inner.ops.iter().rev() {
            match *op {
                Op::Unary { out, a, da } => {
                    let g = adj[out as usize];
                    if g != 0.0 {
                        adj[a as usize] += da * g;
                    }
                }
                Op::Binary { out, a, b, da, db } => {
                    let g = adj[out as usize];
                    if g != 0.0 {
                        adj[a as usize] += da * g;
                        adj[b as usize] += db * g;
                    }
                }
                Op::Affine { out, rows, cols, w, b, x } => {
                    let (out, rows, cols, w, x) =
                        (out as usize, rows as usize, cols as usize, w as usize, x as usize);
                    let gout = &adj[out..out + rows];
                    if gout.iter().all(|&g| g == 0.0) {
                        continue;
                    }
                    let gout: Vec<f64> = gout.to_vec();
                    let xs = &inner.pool[x..x + cols];
                    xbuf.clear();
                    xbuf.extend(xs.iter().map(|&i| inner.values[i as usize]));
                    xadj.clear();
                    xadj.resize(cols, 0.0);
                    for (i, &g) in gout.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        let row = w + i * cols;
                        let wvals = &inner.values[row..row + cols];
                        let wadj = &mut adj[row..row + cols];
                        for j in 0..cols {
                            wadj[j] += xbuf[j] * g;
                            xadj[j] += wvals[j] * g;
                        }
                        if b != NO_SLOT {
                            adj[b as usize + i] += g;
                        }
                    }
                    for (j, &i) in xs.iter().enumerate() {
                        adj[i as usize] += xadj[j];
                    }
                }
            }
        }
        Gradients { adj }
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    adj: Vec<f64>,
}

impl Gradients {
    pub fn wrt(&self, v: &Var<'_>) -> f64 {
        if v.tape.is_some() {
            self.adj[v.idx as usize]
        } else {
            0.0
        }
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|v| self.wrt(v)).collect()
    }
}

/// A scalar recorded on a [`Tape`], or a tape-free constant.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var(#{}: {})", self.idx, self.val),
            None => write!(f, "Var(const {})", self.val),
        }
    }
}

impl<'t> Var<'t> {
    pub fn constant(val: f64) -> Self {
        Var { tape: None, idx: NO_SLOT, val }
    }

    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    #[inline]
    fn unary_op(self, val: f64, da: f64) -> Self {
        match self.tape {
            None => Var::constant(val),
            Some(t) => t.unary(val, self.idx, da),
        }
    }

    #[inline]
    fn binary_op(self, o: Self, val: f64, da: f64, db: f64) -> Self {
        match (self.tape, o.tape) {
            (None, None) => Var::constant(val),
            (Some(t), None) => t.unary(val, self.idx, da),
            (None, Some(t)) => t.unary(val, o.idx, db),
            (Some(t), Some(u)) => {
                debug_assert!(std::ptr::eq(t, u), "mixing vars from different tapes");
                t.binary(val, self.idx, da, o.idx, db)
            }
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        let val = self.val + o.val;
        if o.tape.is_none() && o.val == 0.0 {
            return Var { val, ..self };
        }
        if self.tape.is_none() && self.val == 0.0 {
            return Var { val, ..o };
        }
        self.binary_op(o, val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        let val = self.val - o.val;
        if o.tape.is_none() && o.val == 0.0 {
            return Var { val, ..self };
        }
        self.binary_op(o, val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        self.binary_op(o, self.val * o.val, o.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let val = self.val / o.val;
        self.binary_op(o, val, 1.0 / o.val, -val / o.val)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.unary_op(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn add(self, c: f64) -> Self {
        let val = self.val + c;
        if c == 0.0 {
            return Var { val, ..self };
        }
        self.unary_op(val, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn sub(self, c: f64) -> Self {
        let val = self.val - c;
        if c == 0.0 {
            return Var { val, ..self };
        }
        self.unary_op(val, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn mul(self, c: f64) -> Self {
        self.unary_op(self.val * c, c)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Self;
    #[inline]
    fn div(self, c: f64) -> Self {
        self.unary_op(self.val / c, 1.0 / c)
    }
}

impl<'t> AddAssign for Var<'t> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<'t> SubAssign for Var<'t> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<'t> MulAssign for Var<'t> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<'t> Scalar for Var<'t> {
    type Leaf = Var<'t>;

    fn cst(v: f64) -> Self {
        Var::constant(v)
    }

    fn from_leaf(l: Self) -> Self {
        l
    }

    fn value(&self) -> f64 {
        self.val
    }

    fn sin(self) -> Self {
        self.unary_op(self.val.sin(), self.val.cos())
    }

    fn cos(self) -> Self {
        self.unary_op(self.val.cos(), -self.val.sin())
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary_op(e, e)
    }

    fn ln(self) -> Self {
        self.unary_op(self.val.ln(), 1.0 / self.val)
    }

    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        self.unary_op(r, 0.5 / r)
    }

    fn abs(self) -> Self {
        let d = if self.val > 0.0 {
            1.0
        } else if self.val < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary_op(self.val.abs(), d)
    }

    fn softplus(self) -> Self {
        self.unary_op(softplus(self.val), sigmoid(self.val))
    }

    fn sigmoid(self) -> Self {
        let s = sigmoid(self.val);
        self.unary_op(s, s * (1.0 - s))
    }

    fn affine(w: &[Self], b: Option<&[Self]>, x: &[Self]) -> Vec<Self> {
        let tape = w
            .iter()
            .chain(b.unwrap_or(&[]).iter())
            .chain(x.iter())
            .find_map(|v| v.tape);
        match tape {
            Some(t) => t.affine(w, b, x),
            None => {
                let wv: Vec<f64> = w.iter().map(|v| v.val).collect();
                let xv: Vec<f64> = x.iter().map(|v| v.val).collect();
                let bv: Option<Vec<f64>> = b.map(|b| b.iter().map(|v| v.val).collect());
                affine_f64(&wv, bv.as_deref(), &xv)
                    .into_iter()
                    .map(Var::constant)
                    .collect()
            }
        }
    }
}
