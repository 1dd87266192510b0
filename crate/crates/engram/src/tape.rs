//! Reverse-mode automatic differentiation on flat 64-bit buffers.
//!
//! A [`Tape`] is a define-by-run recording: every operation evaluates its
//! result eagerly, stores the forward value, and registers how to push
//! gradients back to its parents. Calling [`Tape::backward`] on a scalar
//! walks the recording once in reverse. Tapes are rebuilt per forward pass,
//! which keeps recurrent unrolling trivially correct.
//!
//! Shape mismatches and non-finite values are programming errors and panic;
//! recoverable conditions (zero-norm similarity inputs) are recorded as
//! degenerate events instead of producing NaN.

use crate::params::ParamId;

/// Dense layout of a tape value: scalar, vector, or row-major matrix.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> usize {
        match *self {
            Shape::Matrix(r, _) => r,
            _ => panic!("expected matrix, got {self:?}"),
        }
    }

    pub fn cols(&self) -> usize {
        match *self {
            Shape::Matrix(_, c) => c,
            _ => panic!("expected matrix, got {self:?}"),
        }
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TensorId(pub(crate) usize);

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Softplus,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    Div(TensorId, TensorId),
    MulScalar(TensorId, TensorId),
    Recip(TensorId),
    AffineConst(TensorId, f64),
    PowConst(TensorId, f64),
    Act(TensorId, Activation),
    Exp(TensorId),
    Ln(TensorId),
    Sum(TensorId),
    Dot(TensorId, TensorId),
    MaxVec(TensorId, usize),
    LogSumExp(TensorId),
    Pick(TensorId, usize),
    Concat(Vec<TensorId>),
    ConcatRows(Vec<TensorId>),
    Slice(TensorId, usize, usize),
    Reshape(TensorId),
    Transpose(TensorId),
    Row(TensorId, usize),
    ZeroDiag(TensorId),
    Matmul(TensorId, TensorId),
    MatVec(TensorId, TensorId),
    Outer(TensorId, TensorId),
    Softmax(TensorId),
    LogSoftmax(TensorId),
    SoftmaxStrength(TensorId, TensorId),
    Sharpen(TensorId, TensorId),
    ShiftConv(TensorId, TensorId),
    CosineVec(TensorId, TensorId),
    CosineRows(TensorId, TensorId),
    Allocation(TensorId, Vec<usize>),
    GumbelSoftmaxSt { scores: TensorId, tau: f64, noise: Vec<f64> },
    BceLogits(TensorId, Vec<f64>),
}

pub struct Tape {
    ops: Vec<Op>,
    shapes: Vec<Shape>,
    vals: Vec<Vec<f64>>,
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<Option<ParamId>>,
    degenerate: Vec<String>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn softmax_into(z: &[f64], out: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            ops: Vec::new(),
            shapes: Vec::new(),
            vals: Vec::new(),
            grads: Vec::new(),
            params: Vec::new(),
            degenerate: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn shape(&self, t: TensorId) -> Shape {
        self.shapes[t.0]
    }

    pub fn value(&self, t: TensorId) -> &[f64] {
        &self.vals[t.0]
    }

    pub fn scalar_value(&self, t: TensorId) -> f64 {
        assert_eq!(self.shapes[t.0], Shape::Scalar, "scalar_value on non-scalar");
        self.vals[t.0][0]
    }

    /// Gradient of the last `backward` target with respect to `t`, if reached.
    pub fn grad(&self, t: TensorId) -> Option<&[f64]> {
        self.grads[t.0].as_deref()
    }

    pub fn note_degenerate(&mut self, what: impl Into<String>) {
        self.degenerate.push(what.into());
    }

    pub fn degenerate_events(&self) -> &[String] {
        &self.degenerate
    }

    fn push(&mut self, op: Op, shape: Shape, val: Vec<f64>) -> TensorId {
        debug_assert_eq!(shape.len(), val.len());
        if let Some(bad) = val.iter().find(|v| !v.is_finite()) {
            panic!("non-finite value {bad} produced by {op:?}");
        }
        self.ops.push(op);
        self.shapes.push(shape);
        self.vals.push(val);
        self.grads.push(None);
        self.params.push(None);
        TensorId(self.ops.len() - 1)
    }

    pub fn leaf(&mut self, shape: Shape, data: &[f64]) -> TensorId {
        assert_eq!(shape.len(), data.len(), "leaf data length does not match shape");
        self.push(Op::Leaf, shape, data.to_vec())
    }

    pub fn leaf_scalar(&mut self, x: f64) -> TensorId {
        self.leaf(Shape::Scalar, &[x])
    }

    pub fn leaf_vec(&mut self, data: &[f64]) -> TensorId {
        self.leaf(Shape::Vector(data.len()), data)
    }

    pub fn leaf_mat(&mut self, rows: usize, cols: usize, data: &[f64]) -> TensorId {
        self.leaf(Shape::Matrix(rows, cols), data)
    }

    /// Leaf tied to an externally-owned parameter; `ParamStore::absorb_grads`
    /// collects its gradient after `backward`.
    pub fn param_leaf(&mut self, shape: Shape, data: &[f64], pid: ParamId) -> TensorId {
        let t = self.leaf(shape, data);
        self.params[t.0] = Some(pid);
        t
    }

    pub(crate) fn param_bindings(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.params
            .iter()
            .zip(&self.grads)
            .filter_map(|(p, g)| match (p, g) {
                (Some(pid), Some(grad)) => Some((*pid, grad.as_slice())),
                _ => None,
            })
    }

    fn same_shape(&self, a: TensorId, b: TensorId, what: &str) -> Shape {
        let (sa, sb) = (self.shapes[a.0], self.shapes[b.0]);
        assert_eq!(sa, sb, "{what}: shape mismatch {sa:?} vs {sb:?}");
        sa
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let s = self.same_shape(a, b, "add");
        let v = self.vals[a.0].iter().zip(&self.vals[b.0]).map(|(x, y)| x + y).collect();
        self.push(Op::Add(a, b), s, v)
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let s = self.same_shape(a, b, "sub");
        let v = self.vals[a.0].iter().zip(&self.vals[b.0]).map(|(x, y)| x - y).collect();
        self.push(Op::Sub(a, b), s, v)
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let s = self.same_shape(a, b, "mul");
        let v = self.vals[a.0].iter().zip(&self.vals[b.0]).map(|(x, y)| x * y).collect();
        self.push(Op::Mul(a, b), s, v)
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let s = self.same_shape(a, b, "div");
        let v = self.vals[a.0].iter().zip(&self.vals[b.0]).map(|(x, y)| x / y).collect();
        self.push(Op::Div(a, b), s, v)
    }

    /// Broadcast multiply by a scalar tensor.
    pub fn mul_scalar(&mut self, x: TensorId, s: TensorId) -> TensorId {
        assert_eq!(self.shapes[s.0], Shape::Scalar, "mul_scalar: second arg must be scalar");
        let c = self.vals[s.0][0];
        let shape = self.shapes[x.0];
        let v = self.vals[x.0].iter().map(|a| a * c).collect();
        self.push(Op::MulScalar(x, s), shape, v)
    }

    pub fn recip(&mut self, x: TensorId) -> TensorId {
        let shape = self.shapes[x.0];
        let v = self.vals[x.0].iter().map(|a| 1.0 / a).collect();
        self.push(Op::Recip(x), shape, v)
    }

    /// Elementwise `a*x + b` with constant coefficients.
    pub fn affine(&mut self, x: TensorId, a: f64, b: f64) -> TensorId {
        let shape = self.shapes[x.0];
        let v = self.vals[x.0].iter().map(|t| a * t + b).collect();
        self.push(Op::AffineConst(x, a), shape, v)
    }

    pub fn neg(&mut self, x: TensorId) -> TensorId {
        self.affine(x, -1.0, 0.0)
    }

    pub fn scale(&mut self, x: TensorId, a: f64) -> TensorId {
        self.affine(x, a, 0.0)
    }

    pub fn pow_const(&mut self, x: TensorId, p: f64) -> TensorId {
        let shape = self.shapes[x.0];
        let v = self.vals[x.0].iter().map(|a| a.powf(p)).collect();
        self.push(Op::PowConst(x, p), shape, v)
    }

    pub fn square(&mut self, x: TensorId) -> TensorId {
        self.pow_const(x, 2.0)
    }

    pub fn apply_activation(&mut self, kind: Activation, x: TensorId) -> TensorId {
        let shape = self.shapes[x.0];
        let f = match kind {
            Activation::Sigmoid => sigmoid,
            Activation::Tanh => f64::tanh,
            Activation::Relu => |v: f64| v.max(0.0),
            Activation::Softplus => softplus,
        };
        let v = self.vals[x.0].iter().map(|&a| f(a)).collect();
        self.push(Op::Act(x, kind), shape, v)
    }

    pub fn sigmoid(&mut self, x: TensorId) -> TensorId {
        self.apply_activation(Activation::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: TensorId) -> TensorId {
        self.apply_activation(Activation::Tanh, x)
    }

    pub fn relu(&mut self, x: TensorId) -> TensorId {
        self.apply_activation(Activation::Relu, x)
    }

    pub fn softplus(&mut self, x: TensorId) -> TensorId {
        self.apply_activation(Activation::Softplus, x)
    }

    pub fn exp(&mut self, x: TensorId) -> TensorId {
        let shape = self.shapes[x.0];
        let v = self.vals[x.0].iter().map(|a| a.exp()).collect();
        self.push(Op::Exp(x), shape, v)
    }

    pub fn ln(&mut self, x: TensorId) -> TensorId {
        let shape = self.shapes[x.0];
        let v = self.vals[x.0].iter().map(|a| a.ln()).collect();
        self.push(Op::Ln(x), shape, v)
    }

    pub fn sum(&mut self, x: TensorId) -> TensorId {
        let v = self.vals[x.0].iter().sum();
        self.push(Op::Sum(x), Shape::Scalar, vec![v])
    }

    pub fn dot(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.same_shape(a, b, "dot");
        let v = self.vals[a.0].iter().zip(&self.vals[b.0]).map(|(x, y)| x * y).sum();
        self.push(Op::Dot(a, b), Shape::Scalar, vec![v])
    }

    /// Maximum entry of a vector; gradient routes to the (first) argmax.
    pub fn max_vec(&mut self, x: TensorId) -> TensorId {
        let xs = &self.vals[x.0];
        assert!(!xs.is_empty(), "max_vec on empty vector");
        let mut best = 0;
        for (i, v) in xs.iter().enumerate() {
            if *v > xs[best] {
                best = i;
            }
        }
        let v = xs[best];
        self.push(Op::MaxVec(x, best), Shape::Scalar, vec![v])
    }

    pub fn logsumexp(&mut self, x: TensorId) -> TensorId {
        let xs = &self.vals[x.0];
        assert!(!xs.is_empty(), "logsumexp on empty vector");
        let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let v = m + xs.iter().map(|a| (a - m).exp()).sum::<f64>().ln();
        self.push(Op::LogSumExp(x), Shape::Scalar, vec![v])
    }

    pub fn pick(&mut self, x: TensorId, i: usize) -> TensorId {
        let v = self.vals[x.0][i];
        self.push(Op::Pick(x, i), Shape::Scalar, vec![v])
    }

    /// Concatenate scalars/vectors into one vector.
    pub fn concat(&mut self, parts: &[TensorId]) -> TensorId {
        assert!(!parts.is_empty(), "concat of nothing");
        let mut data = Vec::new();
        for p in parts {
            match self.shapes[p.0] {
                Shape::Scalar | Shape::Vector(_) => data.extend_from_slice(&self.vals[p.0]),
                s => panic!("concat expects scalars/vectors, got {s:?}"),
            }
        }
        let n = data.len();
        self.push(Op::Concat(parts.to_vec()), Shape::Vector(n), data)
    }

    /// Stack equal-length vectors as the rows of a matrix.
    pub fn concat_rows(&mut self, rows: &[TensorId]) -> TensorId {
        assert!(!rows.is_empty(), "concat_rows of nothing");
        let w = match self.shapes[rows[0].0] {
            Shape::Vector(n) => n,
            s => panic!("concat_rows expects vectors, got {s:?}"),
        };
        let mut data = Vec::with_capacity(rows.len() * w);
        for r in rows {
            assert_eq!(self.shapes[r.0], Shape::Vector(w), "concat_rows: ragged rows");
            data.extend_from_slice(&self.vals[r.0]);
        }
        self.push(Op::ConcatRows(rows.to_vec()), Shape::Matrix(rows.len(), w), data)
    }

    pub fn slice(&mut self, x: TensorId, start: usize, len: usize) -> TensorId {
        match self.shapes[x.0] {
            Shape::Vector(n) => assert!(start + len <= n, "slice out of bounds"),
            s => panic!("slice expects vector, got {s:?}"),
        }
        let v = self.vals[x.0][start..start + len].to_vec();
        self.push(Op::Slice(x, start, len), Shape::Vector(len), v)
    }

    pub fn reshape(&mut self, x: TensorId, shape: Shape) -> TensorId {
        assert_eq!(self.shapes[x.0].len(), shape.len(), "reshape length mismatch");
        let v = self.vals[x.0].clone();
        self.push(Op::Reshape(x), shape, v)
    }

    pub fn transpose(&mut self, m: TensorId) -> TensorId {
        let (r, c) = (self.shapes[m.0].rows(), self.shapes[m.0].cols());
        let src = &self.vals[m.0];
        let mut v = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                v[j * r + i] = src[i * c + j];
            }
        }
        self.push(Op::Transpose(m), Shape::Matrix(c, r), v)
    }

    pub fn row(&mut self, m: TensorId, i: usize) -> TensorId {
        let (r, c) = (self.shapes[m.0].rows(), self.shapes[m.0].cols());
        assert!(i < r, "row index out of bounds");
        let v = self.vals[m.0][i * c..(i + 1) * c].to_vec();
        self.push(Op::Row(m, i), Shape::Vector(c), v)
    }

    pub fn zero_diag(&mut self, m: TensorId) -> TensorId {
        let (r, c) = (self.shapes[m.0].rows(), self.shapes[m.0].cols());
        assert_eq!(r, c, "zero_diag expects square matrix");
        let mut v = self.vals[m.0].clone();
        for i in 0..r {
            v[i * c + i] = 0.0;
        }
        self.push(Op::ZeroDiag(m), Shape::Matrix(r, c), v)
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (m, k) = (self.shapes[a.0].rows(), self.shapes[a.0].cols());
        let (k2, n) = (self.shapes[b.0].rows(), self.shapes[b.0].cols());
        assert_eq!(k, k2, "matmul: inner extents {k} vs {k2}");
        let (av, bv) = (&self.vals[a.0], &self.vals[b.0]);
        let mut v = vec![0.0; m * n];
        for i in 0..m {
            for l in 0..k {
                let x = av[i * k + l];
                if x == 0.0 {
                    continue;
                }
                let brow = &bv[l * n..(l + 1) * n];
                let vrow = &mut v[i * n..(i + 1) * n];
                for (o, y) in vrow.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        self.push(Op::Matmul(a, b), Shape::Matrix(m, n), v)
    }

    pub fn matvec(&mut self, m: TensorId, x: TensorId) -> TensorId {
        let (r, c) = (self.shapes[m.0].rows(), self.shapes[m.0].cols());
        assert_eq!(self.shapes[x.0], Shape::Vector(c), "matvec: {r}x{c} times {:?}", self.shapes[x.0]);
        let (mv, xv) = (&self.vals[m.0], &self.vals[x.0]);
        let mut v = vec![0.0; r];
        for i in 0..r {
            let row = &mv[i * c..(i + 1) * c];
            v[i] = row.iter().zip(xv).map(|(a, b)| a * b).sum();
        }
        self.push(Op::MatVec(m, x), Shape::Vector(r), v)
    }

    pub fn outer(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let m = match self.shapes[a.0] {
            Shape::Vector(n) => n,
            s => panic!("outer expects vectors, got {s:?}"),
        };
        let n = match self.shapes[b.0] {
            Shape::Vector(n) => n,
            s => panic!("outer expects vectors, got {s:?}"),
        };
        let (av, bv) = (&self.vals[a.0], &self.vals[b.0]);
        let mut v = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                v.push(av[i] * bv[j]);
            }
        }
        self.push(Op::Outer(a, b), Shape::Matrix(m, n), v)
    }

    pub fn softmax(&mut self, x: TensorId) -> TensorId {
        let shape = self.shapes[x.0];
        assert!(matches!(shape, Shape::Vector(n) if n > 0), "softmax expects nonempty vector");
        let mut v = vec![0.0; shape.len()];
        softmax_into(&self.vals[x.0], &mut v);
        self.push(Op::Softmax(x), shape, v)
    }

    pub fn log_softmax(&mut self, x: TensorId) -> TensorId {
        let shape = self.shapes[x.0];
        assert!(matches!(shape, Shape::Vector(n) if n > 0), "log_softmax expects nonempty vector");
        let xs = &self.vals[x.0];
        let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + xs.iter().map(|a| (a - m).exp()).sum::<f64>().ln();
        let v = xs.iter().map(|a| a - lse).collect();
        self.push(Op::LogSoftmax(x), shape, v)
    }

    /// `softmax(beta * scores)` with max-subtraction; `beta` is a scalar tensor.
    pub fn softmax_with_strength(&mut self, scores: TensorId, beta: TensorId) -> TensorId {
        let shape = self.shapes[scores.0];
        assert!(matches!(shape, Shape::Vector(n) if n > 0), "softmax_with_strength expects nonempty vector");
        assert_eq!(self.shapes[beta.0], Shape::Scalar, "strength must be scalar");
        let b = self.vals[beta.0][0];
        assert!(b >= 0.0, "strength must be nonnegative, got {b}");
        let z: Vec<f64> = self.vals[scores.0].iter().map(|s| b * s).collect();
        let mut v = vec![0.0; shape.len()];
        softmax_into(&z, &mut v);
        self.push(Op::SoftmaxStrength(scores, beta), shape, v)
    }

    /// Normalized `w^gamma` computed in log space; gradients treat zero
    /// entries as stuck at zero (they are, for gamma > 1).
    pub fn sharpen(&mut self, w: TensorId, gamma: TensorId) -> TensorId {
        let shape = self.shapes[w.0];
        assert!(matches!(shape, Shape::Vector(n) if n > 0), "sharpen expects nonempty vector");
        assert_eq!(self.shapes[gamma.0], Shape::Scalar, "gamma must be scalar");
        let g = self.vals[gamma.0][0];
        assert!(g >= 1.0, "sharpen exponent must be >= 1, got {g}");
        let ws = &self.vals[w.0];
        assert!(ws.iter().all(|v| *v >= 0.0), "sharpen expects nonnegative weights");
        let mut v = vec![0.0; ws.len()];
        if g == 1.0 {
            let s: f64 = ws.iter().sum();
            assert!(s > 0.0, "sharpen: all-zero weight vector");
            for (o, w) in v.iter_mut().zip(ws) {
                *o = w / s;
            }
        } else {
            let logs: Vec<f64> = ws.iter().map(|w| g * w.ln()).collect();
            let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(m.is_finite(), "sharpen: all-zero weight vector");
            let mut s = 0.0;
            for (o, l) in v.iter_mut().zip(&logs) {
                *o = (l - m).exp();
                s += *o;
            }
            for o in v.iter_mut() {
                *o /= s;
            }
        }
        self.push(Op::Sharpen(w, gamma), shape, v)
    }

    /// Circular convolution of `w` with a 3-entry shift distribution over
    /// offsets {-1, 0, +1} (in that order).
    pub fn shift_conv(&mut self, w: TensorId, s: TensorId) -> TensorId {
        let shape = self.shapes[w.0];
        let n = match shape {
            Shape::Vector(n) if n > 0 => n,
            s => panic!("shift_conv expects nonempty vector, got {s:?}"),
        };
        assert_eq!(self.shapes[s.0], Shape::Vector(3), "shift distribution must have 3 entries");
        let (wv, sv) = (&self.vals[w.0], &self.vals[s.0]);
        let mut v = vec![0.0; n];
        for i in 0..n {
            for (idx, off) in [-1i64, 0, 1].iter().enumerate() {
                let j = (i as i64 - off).rem_euclid(n as i64) as usize;
                v[i] += wv[j] * sv[idx];
            }
        }
        self.push(Op::ShiftConv(w, s), shape, v)
    }

    /// Cosine similarity of two vectors; zero-norm inputs yield 0 and a
    /// degenerate event instead of NaN.
    pub fn cosine_similarity(&mut self, u: TensorId, v: TensorId) -> TensorId {
        self.same_shape(u, v, "cosine_similarity");
        let (uv, vv) = (&self.vals[u.0], &self.vals[v.0]);
        let nu = uv.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nv = vv.iter().map(|a| a * a).sum::<f64>().sqrt();
        let c = if nu == 0.0 || nv == 0.0 {
            self.note_degenerate("cosine_similarity: zero-norm input");
            0.0
        } else {
            let d: f64 = uv.iter().zip(vv).map(|(a, b)| a * b).sum();
            (d / (nu * nv)).clamp(-1.0, 1.0)
        };
        self.push(Op::CosineVec(u, v), Shape::Scalar, vec![c])
    }

    /// Cosine similarity of `key` against every row of `mem` at once.
    pub fn cosine_rows(&mut self, mem: TensorId, key: TensorId) -> TensorId {
        let (n, w) = (self.shapes[mem.0].rows(), self.shapes[mem.0].cols());
        assert_eq!(self.shapes[key.0], Shape::Vector(w), "cosine_rows: key width mismatch");
        let (mv, kv) = (&self.vals[mem.0], &self.vals[key.0]);
        let nk = kv.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut v = vec![0.0; n];
        let mut degenerate = nk == 0.0;
        if nk > 0.0 {
            for i in 0..n {
                let row = &mv[i * w..(i + 1) * w];
                let nr = row.iter().map(|a| a * a).sum::<f64>().sqrt();
                if nr == 0.0 {
                    degenerate = true;
                    continue;
                }
                let d: f64 = row.iter().zip(kv).map(|(a, b)| a * b).sum();
                v[i] = (d / (nr * nk)).clamp(-1.0, 1.0);
            }
        }
        if degenerate {
            self.note_degenerate("cosine_rows: zero-norm input");
        }
        self.push(Op::CosineRows(mem, key), Shape::Vector(n), v)
    }

    /// DNC allocation weighting over ascending usage; the sort permutation is
    /// treated as a constant during backward (straight-through).
    pub fn allocation(&mut self, u: TensorId) -> TensorId {
        let n = match self.shapes[u.0] {
            Shape::Vector(n) if n > 0 => n,
            s => panic!("allocation expects nonempty vector, got {s:?}"),
        };
        let us = &self.vals[u.0];
        assert!(
            us.iter().all(|v| (0.0..=1.0).contains(v)),
            "allocation expects usage in [0,1]"
        );
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| us[a].partial_cmp(&us[b]).unwrap().then(a.cmp(&b)));
        let mut v = vec![0.0; n];
        let mut prefix = 1.0;
        for &slot in &order {
            v[slot] = (1.0 - us[slot]) * prefix;
            prefix *= us[slot];
        }
        self.push(Op::Allocation(u, order), Shape::Vector(n), v)
    }

    /// Straight-through Gumbel-softmax: one-hot forward at the perturbed
    /// argmax, soft gradients at temperature `tau`. `noise` is caller-seeded
    /// Gumbel noise, one entry per score.
    pub fn gumbel_softmax_st(&mut self, scores: TensorId, tau: f64, noise: &[f64]) -> TensorId {
        let shape = self.shapes[scores.0];
        let n = match shape {
            Shape::Vector(n) if n > 0 => n,
            s => panic!("gumbel_softmax_st expects nonempty vector, got {s:?}"),
        };
        assert_eq!(noise.len(), n, "noise length mismatch");
        assert!(tau > 0.0, "temperature must be positive");
        let z: Vec<f64> = self.vals[scores.0]
            .iter()
            .zip(noise)
            .map(|(s, g)| (s + g) / tau)
            .collect();
        let mut best = 0;
        for (i, v) in z.iter().enumerate() {
            if *v > z[best] {
                best = i;
            }
        }
        let mut v = vec![0.0; n];
        v[best] = 1.0;
        self.push(
            Op::GumbelSoftmaxSt { scores, tau, noise: noise.to_vec() },
            shape,
            v,
        )
    }

    /// Summed binary cross-entropy from logits against constant targets.
    pub fn bce_logits(&mut self, logits: TensorId, targets: &[f64]) -> TensorId {
        assert_eq!(self.shapes[logits.0].len(), targets.len(), "bce_logits length mismatch");
        assert!(
            targets.iter().all(|t| (0.0..=1.0).contains(t)),
            "bce_logits targets must lie in [0,1]"
        );
        let loss: f64 = self.vals[logits.0]
            .iter()
            .zip(targets)
            .map(|(x, t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
            .sum();
        self.push(Op::BceLogits(logits, targets.to_vec()), Shape::Scalar, vec![loss])
    }

    fn acc(&mut self, t: TensorId, f: impl FnOnce(&mut [f64])) {
        let n = self.shapes[t.0].len();
        let g = self.grads[t.0].get_or_insert_with(|| vec![0.0; n]);
        f(g);
    }

    /// Reverse pass from a scalar. Gradients from any previous backward call
    /// are discarded first, so replaying is deterministic.
    pub fn backward(&mut self, loss: TensorId) {
        assert_eq!(self.shapes[loss.0], Shape::Scalar, "backward target must be scalar");
        self.backward_seeded(loss, &[1.0]);
    }

    /// Reverse pass from any tensor with an explicit cotangent seed.
    pub fn backward_seeded(&mut self, target: TensorId, seed: &[f64]) {
        assert_eq!(self.shapes[target.0].len(), seed.len(), "seed length mismatch");
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[target.0] = Some(seed.to_vec());
        for idx in (0..=target.0).rev() {
            let g = match &self.grads[idx] {
                Some(g) => g.clone(),
                None => continue,
            };
            let op = self.ops[idx].clone();
            self.backprop_one(idx, &op, &g);
        }
    }

    fn backprop_one(&mut self, idx: usize, op: &Op, g: &[f64]) {
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(*a, |d| for (d, g) in d.iter_mut().zip(g) { *d += g });
                self.acc(*b, |d| for (d, g) in d.iter_mut().zip(g) { *d += g });
            }
            Op::Sub(a, b) => {
                self.acc(*a, |d| for (d, g) in d.iter_mut().zip(g) { *d += g });
                self.acc(*b, |d| for (d, g) in d.iter_mut().zip(g) { *d -= g });
            }
            Op::Mul(a, b) => {
                let bv = self.vals[b.0].clone();
                self.acc(*a, |d| for ((d, g), b) in d.iter_mut().zip(g).zip(&bv) { *d += g * b });
                let av = self.vals[a.0].clone();
                self.acc(*b, |d| for ((d, g), a) in d.iter_mut().zip(g).zip(&av) { *d += g * a });
            }
            Op::Div(a, b) => {
                let av = self.vals[a.0].clone();
                let bv = self.vals[b.0].clone();
                self.acc(*a, |d| for ((d, g), b) in d.iter_mut().zip(g).zip(&bv) { *d += g / b });
                self.acc(*b, |d| {
                    for i in 0..d.len() {
                        d[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                    }
                });
            }
            Op::MulScalar(x, s) => {
                let c = self.vals[s.0][0];
                self.acc(*x, |d| for (d, g) in d.iter_mut().zip(g) { *d += c * g });
                let xv = self.vals[x.0].clone();
                let ds: f64 = g.iter().zip(&xv).map(|(g, x)| g * x).sum();
                self.acc(*s, |d| d[0] += ds);
            }
            Op::Recip(x) => {
                let yv = self.vals[idx].clone();
                self.acc(*x, |d| for ((d, g), y) in d.iter_mut().zip(g).zip(&yv) { *d -= g * y * y });
            }
            Op::AffineConst(x, a) => {
                let a = *a;
                self.acc(*x, |d| for (d, g) in d.iter_mut().zip(g) { *d += a * g });
            }
            Op::PowConst(x, p) => {
                let p = *p;
                let xv = self.vals[x.0].clone();
                self.acc(*x, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] * p * xv[i].powf(p - 1.0);
                    }
                });
            }
            Op::Act(x, kind) => {
                let yv = self.vals[idx].clone();
                let xv = self.vals[x.0].clone();
                let kind = *kind;
                self.acc(*x, |d| {
                    for i in 0..d.len() {
                        let dy = match kind {
                            Activation::Sigmoid => yv[i] * (1.0 - yv[i]),
                            Activation::Tanh => 1.0 - yv[i] * yv[i],
                            Activation::Relu => {
                                if xv[i] > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Activation::Softplus => sigmoid(xv[i]),
                        };
                        d[i] += g[i] * dy;
                    }
                });
            }
            Op::Exp(x) => {
                let yv = self.vals[idx].clone();
                self.acc(*x, |d| for ((d, g), y) in d.iter_mut().zip(g).zip(&yv) { *d += g * y });
            }
            Op::Ln(x) => {
                let xv = self.vals[x.0].clone();
                self.acc(*x, |d| for ((d, g), x) in d.iter_mut().zip(g).zip(&xv) { *d += g / x });
            }
            Op::Sum(x) => {
                let s = g[0];
                self.acc(*x, |d| for d in d.iter_mut() { *d += s });
            }
            Op::Dot(a, b) => {
                let s = g[0];
                let bv = self.vals[b.0].clone();
                self.acc(*a, |d| for (d, b) in d.iter_mut().zip(&bv) { *d += s * b });
                let av = self.vals[a.0].clone();
                self.acc(*b, |d| for (d, a) in d.iter_mut().zip(&av) { *d += s * a });
            }
            Op::MaxVec(x, arg) => {
                let (s, arg) = (g[0], *arg);
                self.acc(*x, |d| d[arg] += s);
            }
            Op::LogSumExp(x) => {
                let s = g[0];
                let xs = self.vals[x.0].clone();
                let mut soft = vec![0.0; xs.len()];
                softmax_into(&xs, &mut soft);
                self.acc(*x, |d| for (d, p) in d.iter_mut().zip(&soft) { *d += s * p });
            }
            Op::Pick(x, i) => {
                let (s, i) = (g[0], *i);
                self.acc(*x, |d| d[i] += s);
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.shapes[p.0].len();
                    let gs = g[off..off + n].to_vec();
                    self.acc(*p, |d| for (d, g) in d.iter_mut().zip(&gs) { *d += g });
                    off += n;
                }
            }
            Op::ConcatRows(rows) => {
                let w = self.shapes[rows[0].0].len();
                for (i, r) in rows.iter().enumerate() {
                    let gs = g[i * w..(i + 1) * w].to_vec();
                    self.acc(*r, |d| for (d, g) in d.iter_mut().zip(&gs) { *d += g });
                }
            }
            Op::Slice(x, start, len) => {
                let (start, len) = (*start, *len);
                self.acc(*x, |d| {
                    for i in 0..len {
                        d[start + i] += g[i];
                    }
                });
            }
            Op::Reshape(x) => {
                self.acc(*x, |d| for (d, g) in d.iter_mut().zip(g) { *d += g });
            }
            Op::Transpose(m) => {
                let (r, c) = (self.shapes[m.0].rows(), self.shapes[m.0].cols());
                self.acc(*m, |d| {
                    for i in 0..r {
                        for j in 0..c {
                            d[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::Row(m, i) => {
                let c = self.shapes[m.0].cols();
                let i = *i;
                self.acc(*m, |d| {
                    for j in 0..c {
                        d[i * c + j] += g[j];
                    }
                });
            }
            Op::ZeroDiag(m) => {
                let n = self.shapes[m.0].rows();
                self.acc(*m, |d| {
                    for i in 0..n {
                        for j in 0..n {
                            if i != j {
                                d[i * n + j] += g[i * n + j];
                            }
                        }
                    }
                });
            }
            Op::Matmul(a, b) => {
                let (m, k) = (self.shapes[a.0].rows(), self.shapes[a.0].cols());
                let n = self.shapes[b.0].cols();
                let bv = self.vals[b.0].clone();
                self.acc(*a, |d| {
                    for i in 0..m {
                        for l in 0..k {
                            let mut s = 0.0;
                            for j in 0..n {
                                s += g[i * n + j] * bv[l * n + j];
                            }
                            d[i * k + l] += s;
                        }
                    }
                });
                let av = self.vals[a.0].clone();
                self.acc(*b, |d| {
                    for l in 0..k {
                        for j in 0..n {
                            let mut s = 0.0;
                            for i in 0..m {
                                s += av[i * k + l] * g[i * n + j];
                            }
                            d[l * n + j] += s;
                        }
                    }
                });
            }
            Op::MatVec(m, x) => {
                let (r, c) = (self.shapes[m.0].rows(), self.shapes[m.0].cols());
                let xv = self.vals[x.0].clone();
                self.acc(*m, |d| {
                    for i in 0..r {
                        for j in 0..c {
                            d[i * c + j] += g[i] * xv[j];
                        }
                    }
                });
                let mv = self.vals[m.0].clone();
                self.acc(*x, |d| {
                    for j in 0..c {
                        let mut s = 0.0;
                        for i in 0..r {
                            s += mv[i * c + j] * g[i];
                        }
                        d[j] += s;
                    }
                });
            }
            Op::Outer(a, b) => {
                let m = self.shapes[a.0].len();
                let n = self.shapes[b.0].len();
                let bv = self.vals[b.0].clone();
                self.acc(*a, |d| {
                    for i in 0..m {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j] * bv[j];
                        }
                        d[i] += s;
                    }
                });
                let av = self.vals[a.0].clone();
                self.acc(*b, |d| {
                    for j in 0..n {
                        let mut s = 0.0;
                        for i in 0..m {
                            s += g[i * n + j] * av[i];
                        }
                        d[j] += s;
                    }
                });
            }
            Op::Softmax(x) => {
                let yv = self.vals[idx].clone();
                let inner: f64 = g.iter().zip(&yv).map(|(g, y)| g * y).sum();
                self.acc(*x, |d| {
                    for i in 0..d.len() {
                        d[i] += yv[i] * (g[i] - inner);
                    }
                });
            }
            Op::LogSoftmax(x) => {
                let xs = self.vals[x.0].clone();
                let mut soft = vec![0.0; xs.len()];
                softmax_into(&xs, &mut soft);
                let gsum: f64 = g.iter().sum();
                self.acc(*x, |d| {
                    for i in 0..d.len() {
                        d[i] += g[i] - soft[i] * gsum;
                    }
                });
            }
            Op::SoftmaxStrength(scores, beta) => {
                let yv = self.vals[idx].clone();
                let b = self.vals[beta.0][0];
                let sv = self.vals[scores.0].clone();
                let inner: f64 = g.iter().zip(&yv).map(|(g, y)| g * y).sum();
                let dz: Vec<f64> = (0..yv.len()).map(|i| yv[i] * (g[i] - inner)).collect();
                self.acc(*scores, |d| for (d, dz) in d.iter_mut().zip(&dz) { *d += b * dz });
                let db: f64 = dz.iter().zip(&sv).map(|(dz, s)| dz * s).sum();
                self.acc(*beta, |d| d[0] += db);
            }
            Op::Sharpen(w, gamma) => {
                let yv = self.vals[idx].clone();
                let wv = self.vals[w.0].clone();
                let gm = self.vals[gamma.0][0];
                let inner: f64 = g.iter().zip(&yv).map(|(g, y)| g * y).sum();
                if gm == 1.0 {
                    let s: f64 = wv.iter().sum();
                    self.acc(*w, |d| {
                        for i in 0..d.len() {
                            d[i] += (g[i] - inner) / s;
                        }
                    });
                    self.acc(*gamma, |d| {
                        let mut dg = 0.0;
                        for i in 0..yv.len() {
                            if wv[i] > 0.0 {
                                dg += yv[i] * wv[i].ln() * (g[i] - inner);
                            }
                        }
                        d[0] += dg;
                    });
                } else {
                    self.acc(*w, |d| {
                        for i in 0..d.len() {
                            if wv[i] > 0.0 {
                                d[i] += gm * yv[i] / wv[i] * (g[i] - inner);
                            }
                        }
                    });
                    self.acc(*gamma, |d| {
                        let mut dg = 0.0;
                        for i in 0..yv.len() {
                            if wv[i] > 0.0 {
                                dg += yv[i] * wv[i].ln() * (g[i] - inner);
                            }
                        }
                        d[0] += dg;
                    });
                }
            }
            Op::ShiftConv(w, s) => {
                let n = self.shapes[w.0].len();
                let sv = self.vals[s.0].clone();
                self.acc(*w, |d| {
                    for j in 0..n {
                        for (idx_s, off) in [-1i64, 0, 1].iter().enumerate() {
                            let i = (j as i64 + off).rem_euclid(n as i64) as usize;
                            d[j] += g[i] * sv[idx_s];
                        }
                    }
                });
                let wv = self.vals[w.0].clone();
                self.acc(*s, |d| {
                    for (idx_s, off) in [-1i64, 0, 1].iter().enumerate() {
                        let mut acc = 0.0;
                        for i in 0..n {
                            let j = (i as i64 - off).rem_euclid(n as i64) as usize;
                            acc += g[i] * wv[j];
                        }
                        d[idx_s] += acc;
                    }
                });
            }
            Op::CosineVec(u, v) => {
                let s = g[0];
                let uv = self.vals[u.0].clone();
                let vv = self.vals[v.0].clone();
                let nu = uv.iter().map(|a| a * a).sum::<f64>().sqrt();
                let nv = vv.iter().map(|a| a * a).sum::<f64>().sqrt();
                if nu == 0.0 || nv == 0.0 {
                    return;
                }
                let c = self.vals[idx][0];
                self.acc(*u, |d| {
                    for i in 0..d.len() {
                        d[i] += s * (vv[i] / (nu * nv) - c * uv[i] / (nu * nu));
                    }
                });
                self.acc(*v, |d| {
                    for i in 0..d.len() {
                        d[i] += s * (uv[i] / (nu * nv) - c * vv[i] / (nv * nv));
                    }
                });
            }
            Op::CosineRows(mem, key) => {
                let (n, w) = (self.shapes[mem.0].rows(), self.shapes[mem.0].cols());
                let mv = self.vals[mem.0].clone();
                let kv = self.vals[key.0].clone();
                let cv = self.vals[idx].clone();
                let nk = kv.iter().map(|a| a * a).sum::<f64>().sqrt();
                if nk == 0.0 {
                    return;
                }
                let mut dkey = vec![0.0; w];
                self.acc(*mem, |d| {
                    for i in 0..n {
                        if g[i] == 0.0 {
                            continue;
                        }
                        let row = &mv[i * w..(i + 1) * w];
                        let nr = row.iter().map(|a| a * a).sum::<f64>().sqrt();
                        if nr == 0.0 {
                            continue;
                        }
                        for j in 0..w {
                            d[i * w + j] += g[i] * (kv[j] / (nr * nk) - cv[i] * row[j] / (nr * nr));
                        }
                    }
                });
                for i in 0..n {
                    if g[i] == 0.0 {
                        continue;
                    }
                    let row = &mv[i * w..(i + 1) * w];
                    let nr = row.iter().map(|a| a * a).sum::<f64>().sqrt();
                    if nr == 0.0 {
                        continue;
                    }
                    for j in 0..w {
                        dkey[j] += g[i] * (row[j] / (nr * nk) - cv[i] * kv[j] / (nk * nk));
                    }
                }
                self.acc(*key, |d| for (d, dk) in d.iter_mut().zip(&dkey) { *d += dk });
            }
            Op::Allocation(u, order) => {
                let us = self.vals[u.0].clone();
                let n = us.len();
                let mut prefix = vec![1.0; n];
                for j in 1..n {
                    prefix[j] = prefix[j - 1] * us[order[j - 1]];
                }
                self.acc(*u, |d| {
                    for j in 0..n {
                        d[order[j]] -= g[order[j]] * prefix[j];
                    }
                    for m in 0..n {
                        let mut seg = prefix[m];
                        for j in (m + 1)..n {
                            d[order[m]] += g[order[j]] * (1.0 - us[order[j]]) * seg;
                            seg *= us[order[j]];
                        }
                    }
                });
            }
            Op::GumbelSoftmaxSt { scores, tau, noise } => {
                let z: Vec<f64> = self.vals[scores.0]
                    .iter()
                    .zip(noise)
                    .map(|(s, g)| (s + g) / tau)
                    .collect();
                let mut soft = vec![0.0; z.len()];
                softmax_into(&z, &mut soft);
                let inner: f64 = g.iter().zip(&soft).map(|(g, y)| g * y).sum();
                let tau = *tau;
                self.acc(*scores, |d| {
                    for i in 0..d.len() {
                        d[i] += soft[i] * (g[i] - inner) / tau;
                    }
                });
            }
            Op::BceLogits(logits, targets) => {
                let s = g[0];
                let xv = self.vals[logits.0].clone();
                let targets = targets.clone();
                self.acc(*logits, |d| {
                    for i in 0..d.len() {
                        d[i] += s * (sigmoid(xv[i]) - targets[i]);
                    }
                });
            }
        }
    }
}

/// Outcome of comparing tape gradients against central finite differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_coord: usize,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

const REL_FLOOR: f64 = 1e-3;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Checks the tape gradient of `f` at `x` against central differences with
/// step `eps`, coordinate by coordinate. `f` must build a scalar and must be
/// deterministic (pass noise in as captured constants).
pub fn finite_diff_check<F>(f: F, shape: Shape, x: &[f64], eps: f64) -> GradCheckReport
where
    F: Fn(&mut Tape, TensorId) -> TensorId,
{
    assert!(eps > 0.0, "eps must be positive");
    let mut tape = Tape::new();
    let xt = tape.leaf(shape, x);
    let loss = f(&mut tape, xt);
    assert_eq!(tape.shape(loss), Shape::Scalar, "finite_diff_check needs a scalar objective");
    tape.backward(loss);
    let analytic = tape.grad(xt).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; x.len()]);

    let eval = |x: &[f64]| -> f64 {
        let mut t = Tape::new();
        let xt = t.leaf(shape, x);
        let l = f(&mut t, xt);
        t.scalar_value(l)
    };

    let mut numeric = vec![0.0; x.len()];
    let mut bumped = x.to_vec();
    for i in 0..x.len() {
        bumped[i] = x[i] + eps;
        let hi = eval(&bumped);
        bumped[i] = x[i] - eps;
        let lo = eval(&bumped);
        bumped[i] = x[i];
        numeric[i] = (hi - lo) / (2.0 * eps);
    }

    let mut max_rel_err = 0.0;
    let mut worst_coord = 0;
    for i in 0..x.len() {
        let e = rel_err(analytic[i], numeric[i]);
        if e > max_rel_err {
            max_rel_err = e;
            worst_coord = i;
        }
    }
    GradCheckReport { max_rel_err, worst_coord, analytic, numeric }
}
