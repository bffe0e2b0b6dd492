//! Define-by-run reverse-mode automatic differentiation over dense `f64`
//! arrays.
//!
//! A [`Graph`] records every operation of one forward pass as a node.
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and [`Graph::backward`] walks it once in reverse.
//! Gradients of leaves that are used several times accumulate additively.
//!
//! ```
//! use chaosib::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::vector(vec![1.0, 2.0]));
//! let sq = g.square(x);
//! let loss = g.sum(sq);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
//! ```

mod adam;

pub use adam::AdamState;

use crate::error::{Error, Result};

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch {
                op: "tensor",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    LeakyRelu(Var, f64),
    Concat(Vec<Var>),
    Sum(Var),
    Mean(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// Per-row cross entropy; keeps the row softmax for the backward pass.
    SoftmaxXent {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Reparameterize {
        mean: Var,
        log_var: Var,
        noise: Vec<f64>,
    },
    NegSqDist(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, `None` if `v` does not
    /// require gradients or does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, zeros of the given shape when it is unreachable.
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    Ok(())
}

/// `c = a·b + beta·c` for row-major operands, with explicit strides
/// so transposes need no copies.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: strides describe in-bounds views of `a` (m×k), `b` (k×n) and
    // `c` (m×n, row-major); `c` does not alias the inputs.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Leaf whose gradient is wanted.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf treated as data.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        self.push(t, Op::Leaf, requires_grad)
    }

    /// `[n,k]·[k,m] -> [n,m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape.len() != 2 || tb.shape.len() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &ta.data, (k, 1), &tb.data, (n, 1), 0.0, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor { shape: vec![m, n], data: out }, Op::MatMul(a, b), rg))
    }

    /// Adds a length-`m` bias to every row of an `[n,m]` matrix.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tx.shape.len() != 2 || tb.shape != [tx.shape[1]] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: tx.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let m = tx.shape[1];
        let mut data = tx.data.clone();
        for row in data.chunks_exact_mut(m) {
            for (v, bias) in row.iter_mut().zip(&tb.data) {
                *v += bias;
            }
        }
        let t = Tensor {
            shape: tx.shape.clone(),
            data,
        };
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(t, Op::AddBias(x, b), rg))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let tx = self.value(x);
        let t = Tensor {
            shape: tx.shape.clone(),
            data: tx.data.iter().map(|&v| f(v)).collect(),
        };
        let rg = self.rg(x);
        self.push(t, op, rg)
    }

    pub fn leaky_relu(&mut self, x: Var, alpha: f64) -> Var {
        self.unary(x, Op::LeakyRelu(x, alpha), |v| if v > 0.0 { v } else { alpha * v })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, Op::Log(x), f64::ln)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x, c), |v| c * v)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::AddScalar(x), |v| v + c)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(name, ta, tb)?;
        let t = Tensor {
            shape: ta.shape.clone(),
            data: ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect(),
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(t, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data.iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data.iter().sum::<f64>() / t.data.len() as f64;
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Column-wise concatenation of `[n, c_i]` matrices.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Empty("concat of zero tensors".into()))?;
        let n = self.value(*first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let t = self.value(*p);
            if t.shape.len() != 2 || t.shape[0] != n {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: self.value(*first).shape.clone(),
                    rhs: t.shape.clone(),
                });
            }
            widths.push(t.shape[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(i));
            }
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(Tensor { shape: vec![n, total], data }, Op::Concat(parts.to_vec()), rg))
    }

    /// Per-row cross entropy of `[n,k]` logits against integer targets,
    /// returned as a length-`n` vector. Uses a max-shifted log-sum-exp.
    pub fn softmax_cross_entropy_with_logits(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        if t.shape.len() != 2 || t.shape[0] != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy_with_logits",
                lhs: t.shape.clone(),
                rhs: vec![targets.len()],
            });
        }
        let (n, k) = (t.shape[0], t.shape[1]);
        if let Some(&bad) = targets.iter().find(|&&c| c >= k) {
            return Err(Error::OutOfRange(format!("target class {bad} with {k} logits")));
        }
        let mut probs = vec![0.0; n * k];
        let mut losses = Vec::with_capacity(n);
        for i in 0..n {
            let row = t.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (p, &v) in probs[i * k..(i + 1) * k].iter_mut().zip(row) {
                *p = (v - max).exp();
                z += *p;
            }
            for p in &mut probs[i * k..(i + 1) * k] {
                *p /= z;
            }
            losses.push(max + z.ln() - row[targets[i]]);
        }
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::vector(losses),
            Op::SoftmaxXent {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// `mean + exp(log_var / 2) ⊙ noise` with caller-supplied standard-normal noise.
    pub fn gaussian_reparameterize(&mut self, mean: Var, log_var: Var, noise: &Tensor) -> Result<Var> {
        let (tm, tl) = (self.value(mean), self.value(log_var));
        same_shape("gaussian_reparameterize", tm, tl)?;
        same_shape("gaussian_reparameterize", tm, noise)?;
        let data = tm
            .data
            .iter()
            .zip(&tl.data)
            .zip(&noise.data)
            .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
            .collect();
        let t = Tensor {
            shape: tm.shape.clone(),
            data,
        };
        let rg = self.rg(mean) || self.rg(log_var);
        Ok(self.push(
            t,
            Op::Reparameterize {
                mean,
                log_var,
                noise: noise.data.clone(),
            },
            rg,
        ))
    }

    /// Pairwise negative squared Euclidean distance between the rows of
    /// `u: [n,d]` and `v: [m,d]`, giving `[n,m]`.
    pub fn neg_sq_dist(&mut self, u: Var, v: Var) -> Result<Var> {
        let (tu, tv) = (self.value(u), self.value(v));
        if tu.shape.len() != 2 || tv.shape.len() != 2 || tu.shape[1] != tv.shape[1] {
            return Err(Error::ShapeMismatch {
                op: "neg_sq_dist",
                lhs: tu.shape.clone(),
                rhs: tv.shape.clone(),
            });
        }
        let (n, m) = (tu.shape[0], tv.shape[0]);
        let mut data = Vec::with_capacity(n * m);
        for i in 0..n {
            let ui = tu.row(i);
            for j in 0..m {
                let d: f64 = ui.iter().zip(tv.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                data.push(-d);
            }
        }
        let rg = self.rg(u) || self.rg(v);
        Ok(self.push(Tensor { shape: vec![n, m], data }, Op::NegSqDist(u, v), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.data.len() != 1 {
            return Err(Error::NonScalarLoss(lt.shape.clone()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor {
            shape: lt.shape.clone(),
            data: vec![1.0],
        });
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = &g.data;
        // Accumulator for input `v`, or `None` if `v` needs no gradient.
        macro_rules! acc {
            ($v:expr) => {{
                let v: Var = $v;
                if self.nodes[v.0].requires_grad {
                    let shape = &self.nodes[v.0].value.shape;
                    Some(
                        &mut grads[v.0]
                            .get_or_insert_with(|| Tensor::zeros(shape))
                            .data,
                    )
                } else {
                    None
                }
            }};
        }
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape[0], ta.shape[1], tb.shape[1]);
                if let Some(ga) = acc!(*a) {
                    // dA = dC · Bᵀ
                    gemm(m, n, k, gd, (n, 1), &tb.data, (1, n), 1.0, ga);
                }
                if let Some(gb) = acc!(*b) {
                    // dB = Aᵀ · dC
                    gemm(k, m, n, &ta.data, (1, k), gd, (n, 1), 1.0, gb);
                }
            }
            Op::AddBias(x, b) => {
                if let Some(gx) = acc!(*x) {
                    gx.iter_mut().zip(gd).for_each(|(a, d)| *a += d);
                }
                if let Some(gb) = acc!(*b) {
                    let m = gb.len();
                    for row in gd.chunks_exact(m) {
                        gb.iter_mut().zip(row).for_each(|(a, d)| *a += d);
                    }
                }
            }
            Op::LeakyRelu(x, alpha) => {
                let xv = &self.value(*x).data;
                if let Some(gx) = acc!(*x) {
                    for ((a, d), &v) in gx.iter_mut().zip(gd).zip(xv) {
                        *a += if v > 0.0 { *d } else { alpha * d };
                    }
                }
            }
            Op::Concat(parts) => {
                let n = g.rows();
                let total = g.cols();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    if let Some(gp) = acc!(*p) {
                        for i in 0..n {
                            let src = &gd[i * total + offset..i * total + offset + w];
                            gp[i * w..(i + 1) * w].iter_mut().zip(src).for_each(|(a, d)| *a += d);
                        }
                    }
                    offset += w;
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = acc!(*x) {
                    gx.iter_mut().for_each(|a| *a += gd[0]);
                }
            }
            Op::Mean(x) => {
                if let Some(gx) = acc!(*x) {
                    let s = gd[0] / gx.len() as f64;
                    gx.iter_mut().for_each(|a| *a += s);
                }
            }
            Op::Exp(x) => {
                let out = &node.value.data;
                if let Some(gx) = acc!(*x) {
                    for ((a, d), o) in gx.iter_mut().zip(gd).zip(out) {
                        *a += d * o;
                    }
                }
            }
            Op::Log(x) => {
                let xv = &self.value(*x).data;
                if let Some(gx) = acc!(*x) {
                    for ((a, d), v) in gx.iter_mut().zip(gd).zip(xv) {
                        *a += d / v;
                    }
                }
            }
            Op::Square(x) => {
                let xv = &self.value(*x).data;
                if let Some(gx) = acc!(*x) {
                    for ((a, d), v) in gx.iter_mut().zip(gd).zip(xv) {
                        *a += 2.0 * v * d;
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = acc!(v) {
                        gv.iter_mut().zip(gd).for_each(|(x, d)| *x += d);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = acc!(*a) {
                    ga.iter_mut().zip(gd).for_each(|(x, d)| *x += d);
                }
                if let Some(gb) = acc!(*b) {
                    gb.iter_mut().zip(gd).for_each(|(x, d)| *x -= d);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&self.value(*a).data, &self.value(*b).data);
                if let Some(ga) = acc!(*a) {
                    for ((x, d), o) in ga.iter_mut().zip(gd).zip(bv) {
                        *x += d * o;
                    }
                }
                if let Some(gb) = acc!(*b) {
                    for ((x, d), o) in gb.iter_mut().zip(gd).zip(av) {
                        *x += d * o;
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(gx) = acc!(*x) {
                    gx.iter_mut().zip(gd).for_each(|(a, d)| *a += c * d);
                }
            }
            Op::AddScalar(x) => {
                if let Some(gx) = acc!(*x) {
                    gx.iter_mut().zip(gd).for_each(|(a, d)| *a += d);
                }
            }
            Op::SoftmaxXent { logits, targets, probs } => {
                if let Some(gl) = acc!(*logits) {
                    let k = probs.len() / targets.len();
                    for (i, &t) in targets.iter().enumerate() {
                        let row = &mut gl[i * k..(i + 1) * k];
                        for (a, p) in row.iter_mut().zip(&probs[i * k..(i + 1) * k]) {
                            *a += gd[i] * p;
                        }
                        row[t] -= gd[i];
                    }
                }
            }
            Op::Reparameterize { mean, log_var, noise } => {
                if let Some(gm) = acc!(*mean) {
                    gm.iter_mut().zip(gd).for_each(|(a, d)| *a += d);
                }
                let lv = &self.value(*log_var).data;
                if let Some(gl) = acc!(*log_var) {
                    for (((a, d), e), l) in gl.iter_mut().zip(gd).zip(noise).zip(lv) {
                        *a += d * e * 0.5 * (0.5 * l).exp();
                    }
                }
            }
            Op::NegSqDist(u, v) => {
                let (tu, tv) = (self.value(*u), self.value(*v));
                let (n, m, d) = (tu.rows(), tv.rows(), tu.cols());
                if let Some(gu) = acc!(*u) {
                    for i in 0..n {
                        let ui = tu.row(i);
                        let gi = &mut gu[i * d..(i + 1) * d];
                        for j in 0..m {
                            let w = -2.0 * gd[i * m + j];
                            for ((a, x), y) in gi.iter_mut().zip(ui).zip(tv.row(j)) {
                                *a += w * (x - y);
                            }
                        }
                    }
                }
                if let Some(gv) = acc!(*v) {
                    for j in 0..m {
                        let vj = tv.row(j);
                        let gj = &mut gv[j * d..(j + 1) * d];
                        for i in 0..n {
                            let w = 2.0 * gd[i * m + j];
                            for ((a, x), y) in gj.iter_mut().zip(tu.row(i)).zip(vj) {
                                *a += w * (x - y);
                            }
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = rng_from_seed(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central differences of a scalar function of one leaf.
    fn finite_diff(x: &Tensor, f: &dyn Fn(&Tensor) -> f64) -> Vec<f64> {
        let h = 1e-5;
        (0..x.len())
            .map(|i| {
                let mut p = x.clone();
                p.data[i] += h;
                let mut m = x.clone();
                m.data[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn check(x: Tensor, build: impl Fn(&mut Graph, Var) -> Var) {
        let mut g = Graph::new();
        let xv = g.param(x.clone());
        let loss = build(&mut g, xv);
        let grads = g.backward(loss).unwrap();
        let analytic = grads.get(xv).unwrap().data().to_vec();
        let numeric = finite_diff(&x, &|t| {
            let mut g = Graph::new();
            let v = g.param(t.clone());
            let l = build(&mut g, v);
            g.value(l).item()
        });
        for (a, n) in analytic.iter().zip(&numeric) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            assert!(rel < 1e-6, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn sum_of_squares() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        let s = g.square(x);
        let l = g.sum(s);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn reused_leaf_accumulates() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![3.0]));
        let y = g.mul(x, x).unwrap();
        let z = g.add(y, x).unwrap();
        let l = g.sum(z);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[7.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let x = g.param(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn leaky_relu_values() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(vec![-1.0, 2.0]));
        let y = g.leaky_relu(x, 0.2);
        assert_eq!(g.value(y).data(), &[-0.2, 2.0]);
    }

    #[test]
    fn reparameterize_without_noise_is_mean() {
        let mut g = Graph::new();
        let m = g.constant(random(&[3, 2], 1));
        let lv = g.constant(random(&[3, 2], 2));
        let y = g.gaussian_reparameterize(m, lv, &Tensor::zeros(&[3, 2])).unwrap();
        assert_eq!(g.value(y), g.value(m));
    }

    #[test]
    fn uniform_logits_cross_entropy_is_ln_k() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::matrix(2, 5, vec![0.3; 10]).unwrap());
        let l = g.softmax_cross_entropy_with_logits(x, &[0, 4]).unwrap();
        for v in g.value(l).data() {
            assert!((v - 5f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]") && err.contains("matmul"), "{err}");
    }

    #[test]
    fn matmul_gradients() {
        let b = random(&[4, 3], 3);
        check(random(&[2, 4], 4), move |g, x| {
            let bv = g.constant(b.clone());
            let y = g.matmul(x, bv).unwrap();
            let s = g.square(y);
            g.sum(s)
        });
        let a = random(&[2, 4], 5);
        check(random(&[4, 3], 6), move |g, x| {
            let av = g.constant(a.clone());
            let y = g.matmul(av, x).unwrap();
            let s = g.square(y);
            g.mean(s)
        });
    }

    #[test]
    fn elementwise_gradients() {
        check(random(&[3, 2], 7), |g, x| {
            let e = g.exp(x);
            let l = g.add_scalar(e, 1.5);
            let l = g.log(l);
            let s = g.scale(l, -0.7);
            let r = g.leaky_relu(x, 0.2);
            let p = g.mul(s, r).unwrap();
            let q = g.sub(p, x).unwrap();
            g.sum(q)
        });
    }

    #[test]
    fn bias_concat_and_xent_gradients() {
        let w = random(&[5, 4], 8);
        check(random(&[4], 9), move |g, b| {
            let x = g.constant(w.clone());
            let y = g.add_bias(x, b).unwrap();
            let z = g.concat(&[y, x]).unwrap();
            let l = g.softmax_cross_entropy_with_logits(z, &[0, 3, 7, 1, 2]).unwrap();
            g.mean(l)
        });
    }

    #[test]
    fn reparameterize_and_distance_gradients() {
        let noise = random(&[3, 2], 10);
        let other = random(&[4, 2], 11);
        check(random(&[3, 2], 12), move |g, lv| {
            let m = g.constant(Tensor::matrix(3, 2, vec![0.1, 0.2, 0.3, -0.1, 0.0, 0.5]).unwrap());
            let u = g.gaussian_reparameterize(m, lv, &noise).unwrap();
            let v = g.constant(other.clone());
            let d = g.neg_sq_dist(u, v).unwrap();
            let e = g.neg_sq_dist(v, u).unwrap();
            let s1 = g.sum(d);
            let s2 = g.mean(e);
            let t = g.mul(s1, s2).unwrap();
            g.scale(t, 0.1)
        });
    }
}
