//! Reverse-mode gradient engine.
//!
//! A Wengert-list tape records every scalar operation together with its
//! local partial derivatives; `Tape::backward` then sweeps the list once in
//! reverse to produce vector-Jacobian products. The same generic code
//! (screw exponential, MLP forward pass, pose composition) runs on plain
//! `f64` for evaluation and on [`Var`] when gradients are needed, through
//! the [`Real`] trait.
//!
//! The image-space part of the loss is not taped: the renderer computes the
//! loss gradient with respect to the camera pose entries directly and that
//! gradient is fed into the tape as the seed of a VJP.

use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar arithmetic shared by `f64` and tape variables.
pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// A constant living in the same context as `self`.
    fn constant(&self, x: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn constant(&self, x: f64) -> Self {
        x
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
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
}

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// Operation record. Values live in a parallel vector so that forward
/// evaluation stays cache friendly.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    values: RefCell<Vec<f64>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(n)),
            values: RefCell::new(Vec::with_capacity(n)),
        }
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.values.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop every recorded node. Outstanding `Var`s become dangling, which
    /// the borrow checker prevents since they borrow the tape.
    pub fn clear(&mut self) {
        self.nodes.get_mut().clear();
        self.values.get_mut().clear();
    }

    /// New independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(value, [NO_PARENT; 2], [0.0; 2])
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    #[inline]
    fn push(&self, value: f64, parents: [u32; 2], partials: [f64; 2]) -> Var<'_> {
        let mut values = self.values.borrow_mut();
        let idx = values.len() as u32;
        values.push(value);
        self.nodes.borrow_mut().push(Node { parents, partials });
        Var { tape: self, idx }
    }

    #[inline]
    fn unary(&self, a: u32, value: f64, da: f64) -> Var<'_> {
        self.push(value, [a, NO_PARENT], [da, 0.0])
    }

    #[inline]
    fn binary(&self, a: u32, b: u32, value: f64, da: f64, db: f64) -> Var<'_> {
        self.push(value, [a, b], [da, db])
    }

    /// Reverse sweep seeded with `(output, adjoint)` pairs. Returns the
    /// adjoint of every node; query with [`Gradient::wrt`].
    pub fn backward(&self, seeds: &[(Var<'_>, f64)]) -> Gradient {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        let mut top = 0usize;
        for (v, s) in seeds {
            debug_assert!(std::ptr::eq(v.tape, self), "seed from another tape");
            adj[v.idx as usize] += s;
            top = top.max(v.idx as usize + 1);
        }
        for i in (0..top).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = nodes[i];
            for k in 0..2 {
                let p = n.parents[k];
                if p != NO_PARENT {
                    adj[p as usize] += a * n.partials[k];
                }
            }
        }
        Gradient { adj }
    }
}

/// Adjoints produced by a reverse sweep.
pub struct Gradient {
    adj: Vec<f64>,
}

impl Gradient {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adj[v.idx as usize]
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|&v| self.wrt(v)).collect()
    }
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}({})", self.idx, self.value())
    }
}

impl<'t> Var<'t> {
    #[inline]
    fn val(&self) -> f64 {
        self.tape.values.borrow()[self.idx as usize]
    }
}

impl<'t> Real for Var<'t> {
    fn constant(&self, x: f64) -> Self {
        self.tape.push(x, [NO_PARENT; 2], [0.0; 2])
    }
    fn value(&self) -> f64 {
        self.val()
    }
    fn sin(self) -> Self {
        let x = self.val();
        self.tape.unary(self.idx, x.sin(), x.cos())
    }
    fn cos(self) -> Self {
        let x = self.val();
        self.tape.unary(self.idx, x.cos(), -x.sin())
    }
    fn sqrt(self) -> Self {
        let y = self.val().sqrt();
        self.tape.unary(self.idx, y, 0.5 / y)
    }
    fn tanh(self) -> Self {
        let y = self.val().tanh();
        self.tape.unary(self.idx, y, 1.0 - y * y)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        self.tape
            .binary(self.idx, rhs.idx, self.val() + rhs.val(), 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self.tape
            .binary(self.idx, rhs.idx, self.val() - rhs.val(), 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (self.val(), rhs.val());
        self.tape.binary(self.idx, rhs.idx, a * b, b, a)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let (a, b) = (self.val(), rhs.val());
        let q = a / b;
        self.tape.binary(self.idx, rhs.idx, q, 1.0 / b, -q / b)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn neg(self) -> Self {
        self.tape.unary(self.idx, -self.val(), -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn add(self, rhs: f64) -> Self {
        self.tape.unary(self.idx, self.val() + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn sub(self, rhs: f64) -> Self {
        self.tape.unary(self.idx, self.val() - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.tape.unary(self.idx, self.val() * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self.tape.unary(self.idx, self.val() / rhs, 1.0 / rhs)
    }
}

/// 3-vector over any [`Real`].
pub type V3<S> = [S; 3];
/// Row-major 3x3 matrix over any [`Real`].
pub type M3<S> = [[S; 3]; 3];

pub fn dot<S: Real>(a: &V3<S>, b: &V3<S>) -> S {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn mat_vec<S: Real>(m: &M3<S>, x: &V3<S>) -> V3<S> {
    [dot(&m[0], x), dot(&m[1], x), dot(&m[2], x)]
}

pub fn mat_mul<S: Real>(a: &M3<S>, b: &M3<S>) -> M3<S> {
    let mut out = [[a[0][0]; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, o) in row.iter_mut().enumerate() {
            *o = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

/// `a * b` where `b` is a constant matrix.
pub fn mat_mul_const<S: Real>(a: &M3<S>, b: &[[f64; 3]; 3]) -> M3<S> {
    let mut out = [[a[0][0]; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, o) in row.iter_mut().enumerate() {
            *o = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn mat_vec_const<S: Real>(m: &M3<S>, x: &[f64; 3]) -> V3<S> {
    let row = |r: &V3<S>| r[0] * x[0] + r[1] * x[1] + r[2] * x[2];
    [row(&m[0]), row(&m[1]), row(&m[2])]
}

pub fn add3<S: Real>(a: &V3<S>, b: &V3<S>) -> V3<S> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn values3<S: Real>(a: &V3<S>) -> [f64; 3] {
    [a[0].value(), a[1].value(), a[2].value()]
}

pub fn values33<S: Real>(m: &M3<S>) -> [[f64; 3]; 3] {
    [values3(&m[0]), values3(&m[1]), values3(&m[2])]
}
