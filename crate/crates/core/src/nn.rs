//! Minimal reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! walks it in reverse and accumulates gradients into a [`Params`] store.

use ndarray::{s, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub type Mat = Array2<f64>;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm { x: Var, xhat: Mat, inv_std: Vec<f64> },
    Softmax(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SumRows(Var),
    MeanRows(Var),
    RepeatRows(Var, usize),
    Embed(Var, Vec<usize>),
    SumAll(Var),
    Mse(Var, Mat),
}

struct Node {
    value: Mat,
    op: Op,
    /// Some parameter flows into this node.
    grad: bool,
}

/// Named trainable matrices with gradient buffers.
#[derive(Debug, Clone, Default)]
pub struct Params {
    pub names: Vec<String>,
    pub values: Vec<Mat>,
    pub grads: Vec<Mat>,
}

impl Params {
    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> usize {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.grads.push(Mat::zeros(value.raw_dim()));
        self.values.push(value);
        self.names.push(name);
        self.values.len() - 1
    }

    /// Normal init with standard deviation `std`.
    pub fn add_normal<R: Rng>(&mut self, name: impl Into<String>, rows: usize, cols: usize, std: f64, rng: &mut R) -> usize {
        let m = if std > 0.0 {
            let n = Normal::new(0.0, std).expect("finite std");
            Mat::from_shape_fn((rows, cols), |_| n.sample(rng))
        } else {
            Mat::zeros((rows, cols))
        };
        self.add(name, m)
    }

    pub fn add_const(&mut self, name: impl Into<String>, rows: usize, cols: usize, v: f64) -> usize {
        self.add(name, Mat::from_elem((rows, cols), v))
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().map(|g| g.iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn gelu(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    const C: f64 = 0.797_884_560_802_865_4;
    let t = (C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op) -> Var {
        let g = |v: &Var| self.nodes[v.0].grad;
        let grad = match &op {
            Op::Leaf => false,
            Op::Param(_) => true,
            Op::MatMul(a, b) | Op::MatMulT(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::Mul(a, b) | Op::MulRow(a, b) => {
                g(a) || g(b)
            }
            Op::Scale(a, _)
            | Op::Gelu(a)
            | Op::Softmax(a)
            | Op::SliceCols(a, _)
            | Op::SliceRows(a, _)
            | Op::SumRows(a)
            | Op::MeanRows(a)
            | Op::RepeatRows(a, _)
            | Op::Embed(a, _)
            | Op::SumAll(a)
            | Op::Mse(a, _) => g(a),
            Op::LayerNorm { x, .. } => g(x),
            Op::ConcatCols(p) | Op::ConcatRows(p) => p.iter().any(g),
        };
        self.nodes.push(Node { value, op, grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn constant(&mut self, m: Mat) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn param(&mut self, params: &Params, idx: usize) -> Var {
        self.push(params.values[idx].clone(), Op::Param(idx))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    /// `a + row` with `row` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.shape(row), (1, self.shape(a).1), "row shape mismatch");
        let v = self.value(a) + self.value(row);
        self.push(v, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        assert_eq!(self.shape(row), (1, self.shape(a).1), "row shape mismatch");
        let v = self.value(a) * self.value(row);
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a) * s;
        self.push(v, Op::Scale(a, s))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(gelu);
        self.push(v, Op::Gelu(a))
    }

    /// Row-wise normalization to zero mean and unit variance.
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (r, c) = xv.dim();
        let mut xhat = Mat::zeros((r, c));
        let mut inv_std = Vec::with_capacity(r);
        for (i, row) in xv.outer_iter().enumerate() {
            let mean = row.sum() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for (j, v) in row.iter().enumerate() {
                xhat[[i, j]] = (v - mean) * is;
            }
        }
        self.push(xhat.clone(), Op::LayerNorm { x, xhat, inv_std })
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.outer_iter_mut() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - m).exp());
            let s = row.sum();
            row.mapv_inplace(|x| x / s);
        }
        self.push(v, Op::Softmax(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![start..start + len, ..]).to_owned();
        self.push(v, Op::SliceRows(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = ndarray::concatenate(Axis(0), &views).expect("column counts agree");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(v, Op::SumRows(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).mean_axis(Axis(0)).expect("non-empty").insert_axis(Axis(0));
        self.push(v, Op::MeanRows(a))
    }

    /// Repeats every row `k` times in place: row `i` becomes rows `i*k .. i*k+k`.
    pub fn repeat_rows(&mut self, a: Var, k: usize) -> Var {
        let src = self.value(a);
        let (r, c) = src.dim();
        let v = Mat::from_shape_fn((r * k, c), |(i, j)| src[[i / k, j]]);
        self.push(v, Op::RepeatRows(a, k))
    }

    /// Rows of `table` selected by `ids`.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let c = t.ncols();
        let mut v = Mat::zeros((ids.len(), c));
        for (r, &id) in ids.iter().enumerate() {
            v.row_mut(r).assign(&t.row(id));
        }
        self.push(v, Op::Embed(table, ids.to_vec()))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::SumAll(a))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, a: Var, target: Mat) -> Var {
        assert_eq!(self.value(a).dim(), target.dim(), "mse shape mismatch");
        let d = self.value(a) - &target;
        let v = Mat::from_elem((1, 1), d.mapv(|x| x * x).mean().expect("non-empty"));
        self.push(v, Op::Mse(a, target))
    }

    /// Backpropagates from the scalar `root` and adds parameter gradients
    /// into `params.grads`.
    pub fn backward(&self, root: Var, params: &mut Params) {
        assert_eq!(self.shape(root), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Mat>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Mat::from_elem((1, 1), 1.0));
        let need = |v: &Var| self.nodes[v.0].grad;
        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(e) => *e += &g,
                slot => *slot = Some(g),
            }
        }
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => params.grads[*p] += &g,
                Op::MatMul(a, b) => {
                    if need(a) {
                        acc(&mut grads, *a, g.dot(&self.value(*b).t()));
                    }
                    if need(b) {
                        acc(&mut grads, *b, self.value(*a).t().dot(&g));
                    }
                }
                Op::MatMulT(a, b) => {
                    if need(a) {
                        acc(&mut grads, *a, g.dot(self.value(*b)));
                    }
                    if need(b) {
                        acc(&mut grads, *b, g.t().dot(self.value(*a)));
                    }
                }
                Op::Add(a, b) => {
                    if need(b) {
                        acc(&mut grads, *b, g.clone());
                    }
                    if need(a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::AddRow(a, r) => {
                    if need(r) {
                        acc(&mut grads, *r, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if need(a) {
                        acc(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if need(a) {
                        acc(&mut grads, *a, &g * self.value(*b));
                    }
                    if need(b) {
                        acc(&mut grads, *b, &g * self.value(*a));
                    }
                }
                Op::MulRow(a, r) => {
                    if need(r) {
                        acc(&mut grads, *r, (&g * self.value(*a)).sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    if need(a) {
                        acc(&mut grads, *a, &g * self.value(*r));
                    }
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g * *s),
                Op::Gelu(a) => {
                    let ga = &g * &self.value(*a).mapv(gelu_grad);
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm { x, xhat, inv_std } => {
                    let c = xhat.ncols() as f64;
                    let mut gx = Mat::zeros(xhat.raw_dim());
                    for (r, is) in inv_std.iter().enumerate() {
                        let gr = g.row(r);
                        let xr = xhat.row(r);
                        let mg = gr.sum() / c;
                        let mgx = gr.dot(&xr) / c;
                        for j in 0..xhat.ncols() {
                            gx[[r, j]] = is * (gr[j] - mg - xr[j] * mgx);
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut ga = Mat::zeros(y.raw_dim());
                    for r in 0..y.nrows() {
                        let dot = g.row(r).dot(&y.row(r));
                        for j in 0..y.ncols() {
                            ga[[r, j]] = y[[r, j]] * (g[[r, j]] - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SliceCols(a, start) => {
                    let mut ga = Mat::zeros(self.value(*a).raw_dim());
                    ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::SliceRows(a, start) => {
                    let mut ga = Mat::zeros(self.value(*a).raw_dim());
                    ga.slice_mut(s![*start..*start + g.nrows(), ..]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        if need(p) {
                            acc(&mut grads, *p, g.slice(s![.., off..off + w]).to_owned());
                        }
                        off += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        if need(p) {
                            acc(&mut grads, *p, g.slice(s![off..off + h, ..]).to_owned());
                        }
                        off += h;
                    }
                }
                Op::SumRows(a) => {
                    let n = self.value(*a).nrows();
                    let ga = Mat::from_shape_fn((n, g.ncols()), |(_, j)| g[[0, j]]);
                    acc(&mut grads, *a, ga);
                }
                Op::MeanRows(a) => {
                    let n = self.value(*a).nrows();
                    let ga = Mat::from_shape_fn((n, g.ncols()), |(_, j)| g[[0, j]] / n as f64);
                    acc(&mut grads, *a, ga);
                }
                Op::RepeatRows(a, k) => {
                    let (r, c) = self.value(*a).dim();
                    let mut ga = Mat::zeros((r, c));
                    for (i, row) in g.outer_iter().enumerate() {
                        let mut dst = ga.row_mut(i / k);
                        dst += &row;
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Embed(t, ids) => {
                    let mut gt = Mat::zeros(self.value(*t).raw_dim());
                    for (r, &id) in ids.iter().enumerate() {
                        let mut dst = gt.row_mut(id);
                        dst += &g.row(r);
                    }
                    acc(&mut grads, *t, gt);
                }
                Op::SumAll(a) => {
                    let ga = Mat::from_elem(self.value(*a).raw_dim(), g[[0, 0]]);
                    acc(&mut grads, *a, ga);
                }
                Op::Mse(a, target) => {
                    let n = target.len() as f64;
                    let ga = (self.value(*a) - target) * (2.0 * g[[0, 0]] / n);
                    acc(&mut grads, *a, ga);
                }
            }
        }
    }
}

/// Affine layer `x W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    /// Weights drawn with standard deviation `gain / sqrt(fan_in)`.
    pub fn new<R: Rng>(params: &mut Params, name: &str, fan_in: usize, fan_out: usize, gain: f64, rng: &mut R) -> Self {
        let w = params.add_normal(format!("{name}.w"), fan_in, fan_out, gain / (fan_in as f64).sqrt(), rng);
        let b = params.add_const(format!("{name}.b"), 1, fan_out, 0.0);
        Self { w, b }
    }

    pub fn forward(&self, tape: &mut Tape, params: &Params, x: Var) -> Var {
        let w = tape.param(params, self.w);
        let b = tape.param(params, self.b);
        let h = tape.matmul(x, w);
        tape.add_row(h, b)
    }
}

/// Layer normalization with learned gain and bias.
#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub gain: usize,
    pub bias: usize,
}

impl Norm {
    pub fn new(params: &mut Params, name: &str, dim: usize) -> Self {
        Self {
            gain: params.add_const(format!("{name}.gain"), 1, dim, 1.0),
            bias: params.add_const(format!("{name}.bias"), 1, dim, 0.0),
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &Params, x: Var) -> Var {
        let n = tape.layer_norm(x);
        let g = tape.param(params, self.gain);
        let b = tape.param(params, self.bias);
        let h = tape.mul_row(n, g);
        tape.add_row(h, b)
    }
}

/// Pre-normalization transformer block: multi-head self-attention and a
/// GELU feed-forward layer, each added back to the residual stream.
#[derive(Debug, Clone)]
pub struct Block {
    pub heads: usize,
    pub norm1: Norm,
    pub qkv: Linear,
    pub out: Linear,
    pub norm2: Norm,
    pub ff1: Linear,
    pub ff2: Linear,
}

impl Block {
    pub fn new<R: Rng>(params: &mut Params, name: &str, d: usize, heads: usize, hidden: usize, rng: &mut R) -> Self {
        assert!(d % heads == 0, "width {d} not divisible by {heads} heads");
        Self {
            heads,
            norm1: Norm::new(params, &format!("{name}.norm1"), d),
            qkv: Linear::new(params, &format!("{name}.qkv"), d, 3 * d, 1.0, rng),
            out: Linear::new(params, &format!("{name}.out"), d, d, 0.5, rng),
            norm2: Norm::new(params, &format!("{name}.norm2"), d),
            ff1: Linear::new(params, &format!("{name}.ff1"), d, hidden, 1.0, rng),
            ff2: Linear::new(params, &format!("{name}.ff2"), hidden, d, 0.5, rng),
        }
    }

    /// `x` holds one token per row.
    pub fn forward(&self, tape: &mut Tape, params: &Params, x: Var) -> Var {
        let d = tape.shape(x).1;
        let dh = d / self.heads;
        let h = self.norm1.forward(tape, params, x);
        let qkv = self.qkv.forward(tape, params, h);
        let mut heads = Vec::with_capacity(self.heads);
        for k in 0..self.heads {
            let q = tape.slice_cols(qkv, k * dh, dh);
            let kk = tape.slice_cols(qkv, d + k * dh, dh);
            let v = tape.slice_cols(qkv, 2 * d + k * dh, dh);
            let scores = tape.matmul_t(q, kk);
            let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
            let att = tape.softmax_rows(scores);
            heads.push(tape.matmul(att, v));
        }
        let cat = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads) };
        let o = self.out.forward(tape, params, cat);
        let x = tape.add(x, o);
        let h = self.norm2.forward(tape, params, x);
        let f = self.ff1.forward(tape, params, h);
        let f = tape.gelu(f);
        let f = self.ff2.forward(tape, params, f);
        tape.add(x, f)
    }
}

/// Stochastic gradient descent with momentum and global-norm clipping.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    pub clip: f64,
    velocity: Vec<Mat>,
}

impl Sgd {
    pub fn new(params: &Params, momentum: f64, clip: f64) -> Self {
        Self { momentum, clip, velocity: params.values.iter().map(|v| Mat::zeros(v.raw_dim())).collect() }
    }

    /// Applies one update and returns the pre-clipping gradient norm.
    pub fn step(&mut self, params: &mut Params, lr: f64) -> f64 {
        let norm = params.grad_norm();
        let scale = if self.clip > 0.0 && norm > self.clip { self.clip / norm } else { 1.0 };
        for ((v, g), p) in self.velocity.iter_mut().zip(&params.grads).zip(params.values.iter_mut()) {
            v.zip_mut_with(g, |vi, gi| *vi = self.momentum * *vi + scale * gi);
            p.scaled_add(-lr, v);
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;

    /// Central finite differences of `f` against backprop for every
    /// parameter entry.
    fn check(params: &mut Params, f: impl Fn(&mut Tape, &Params) -> Var) {
        params.zero_grads();
        let mut tape = Tape::new();
        let root = f(&mut tape, params);
        tape.backward(root, params);
        let analytic = params.grads.clone();
        let h = 1e-6;
        for p in 0..params.values.len() {
            for i in 0..params.values[p].len() {
                let orig = params.values[p].as_slice().unwrap()[i];
                params.values[p].as_slice_mut().unwrap()[i] = orig + h;
                let mut t = Tape::new();
                let r = f(&mut t, params);
                let up = t.value(r)[[0, 0]];
                params.values[p].as_slice_mut().unwrap()[i] = orig - h;
                let mut t = Tape::new();
                let r = f(&mut t, params);
                let down = t.value(r)[[0, 0]];
                params.values[p].as_slice_mut().unwrap()[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[p].as_slice().unwrap()[i];
                // Some entries have an exactly-zero gradient (key biases under
                // softmax); those only need to agree absolutely.
                let err = (a - numeric).abs();
                let rel = err / a.abs().max(numeric.abs()).max(1e-12);
                assert!(err < 1e-8 || rel < 1e-5, "{}[{i}]: analytic {a} numeric {numeric}", params.names[p]);
            }
        }
    }

    fn random(rows: usize, cols: usize, seed: u64) -> Mat {
        let mut rng = rng_for(seed, &[99]);
        Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn elementary_ops_match_finite_differences() {
        let mut params = Params::default();
        params.add("a", random(3, 4, 1));
        params.add("b", random(4, 5, 2));
        params.add("r", random(1, 5, 3));
        params.add("t", random(6, 5, 4));
        let weights = random(6, 5, 5);
        check(&mut params, |tape, p| {
            let a = tape.param(p, 0);
            let b = tape.param(p, 1);
            let r = tape.param(p, 2);
            let t = tape.param(p, 3);
            let ab = tape.matmul(a, b);
            let ab = tape.add_row(ab, r);
            let ab = tape.mul_row(ab, r);
            let g = tape.gelu(ab);
            let n = tape.layer_norm(g);
            let sm = tape.softmax_rows(n);
            let e = tape.embed(t, &[0, 5, 5, 2]);
            let e = tape.slice_rows(e, 1, 3);
            let m = tape.mul(sm, e);
            let rep = tape.repeat_rows(m, 2);
            let tt = tape.matmul_t(rep, t);
            let tt = tape.slice_cols(tt, 1, 5);
            let both = tape.concat_cols(&[tt, rep]);
            let both = tape.slice_cols(both, 2, 5);
            let stacked = tape.concat_rows(&[both, both]);
            let stacked = tape.slice_rows(stacked, 3, 6);
            let w = tape.constant(weights.clone());
            let prod = tape.mul(stacked, w);
            let mean = tape.mean_rows(prod);
            let sum = tape.sum_rows(prod);
            let sum = tape.scale(sum, 0.3);
            let s = tape.add(mean, sum);
            tape.sum_all(s)
        });
    }

    #[test]
    fn mse_and_blocks_match_finite_differences() {
        let mut rng = rng_for(8, &[1]);
        let mut params = Params::default();
        let block = Block::new(&mut params, "blk", 4, 2, 6, &mut rng);
        let x = random(5, 4, 9);
        let target = random(5, 4, 10);
        check(&mut params, |tape, p| {
            let xv = tape.constant(x.clone());
            let y = block.forward(tape, p, xv);
            tape.mse(y, target.clone())
        });
    }

    #[test]
    fn sgd_minimizes_a_quadratic() {
        let mut params = Params::default();
        params.add("x", random(1, 3, 11));
        let mut opt = Sgd::new(&params, 0.9, 0.0);
        for _ in 0..300 {
            params.zero_grads();
            let mut tape = Tape::new();
            let x = tape.param(&params, 0);
            let l = tape.mse(x, Mat::from_elem((1, 3), 0.25));
            tape.backward(l, &mut params);
            opt.step(&mut params, 0.1);
        }
        assert!(params.values[0].iter().all(|v| (v - 0.25).abs() < 1e-6));
    }
}
