use std::sync::Arc;

use crate::error::{invalid, shape_err, Result, TensorError};
use crate::kernels::{self, AttentionLayout, GeluApprox};
use crate::scalar::Scalar;
use crate::tensor::{as_matrix, Tensor};

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddBias(Var, Var),
    Sum(Var),
    Mean(Var),
    DotConst(Var, Vec<T>),
    Gelu(Var, GeluApprox),
    Silu(Var),
    Abs(Var),
    Softmax {
        x: Var,
        outer: usize,
        len: usize,
        inner: usize,
    },
    LogSoftmax(Var),
    RmsNorm {
        x: Var,
        gamma: Var,
        inv: Vec<T>,
    },
    LayerNorm {
        gamma: Var,
        beta: Var,
        x: Var,
        xhat: Vec<T>,
        inv: Vec<T>,
    },
    Rope {
        x: Var,
        positions: Vec<usize>,
        n_heads: usize,
        base: f64,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        layout: Arc<AttentionLayout>,
        probs: Vec<T>,
    },
    GatherRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    Reshape(Var),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddBias(..) => "add_bias",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::DotConst(..) => "dot_const",
            Op::Gelu(..) => "gelu",
            Op::Silu(_) => "silu",
            Op::Abs(_) => "abs",
            Op::Softmax { .. } => "softmax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::RmsNorm { .. } => "rmsnorm",
            Op::LayerNorm { .. } => "layernorm",
            Op::Rope { .. } => "rope",
            Op::Attention { .. } => "attention",
            Op::GatherRows(..) => "gather_rows",
            Op::ConcatRows(_) => "concat_rows",
            Op::Reshape(_) => "reshape",
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// Append-only record of primitive applications. Insertion order is a
/// topological order, so backward is a single reverse sweep.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    backward_done: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn is_leaf(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Leaf)
    }

    /// Attention probabilities saved by an [`Graph::attention`] node.
    pub fn attention_probs(&self, v: Var) -> Option<(&AttentionLayout, &[T])> {
        match &self.nodes[v.0].op {
            Op::Attention { layout, probs, .. } => Some((layout.as_ref(), probs.as_slice())),
            _ => None,
        }
    }

    /// Trainable input: gradients are accumulated for it.
    pub fn leaf(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(value, Op::Leaf, true)
    }

    /// Input treated as a constant (stop-gradient).
    pub fn constant(&mut self, value: Tensor<T>) -> Result<Var> {
        self.push(value, Op::Constant, false)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(TensorError::NonFinite { op: op.name() });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.any_grad(&[a, b]);
        self.push(out, Op::MatMul(a, b), rg)
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        self.same_shape(op.name(), a, b)?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a, b]);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let out = self.value(a).map(|x| x * s);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Scale(a, s), rg)
    }

    /// Adds a rank-1 `bias` to every row of `x` (broadcast over leading axes).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let vb = self.value(bias);
        let vx = self.value(x);
        if vb.rank() != 1 || vb.numel() != vx.last_dim() {
            return Err(shape_err(
                "add_bias",
                format!("bias {:?} does not match rows of {:?}", vb.shape(), vx.shape()),
            ));
        }
        let c = vb.numel();
        let mut data = vx.data().to_vec();
        for row in data.chunks_mut(c) {
            for (o, &b) in row.iter_mut().zip(vb.data()) {
                *o += b;
            }
        }
        let out = Tensor::new(vx.shape().to_vec(), data)?;
        let rg = self.any_grad(&[x, bias]);
        self.push(out, Op::AddBias(x, bias), rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.numel() == 0 {
            return Err(invalid("mean", "empty tensor"));
        }
        let out = Tensor::scalar(v.sum() / T::lit(v.numel() as f64));
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Mean(a), rg)
    }

    /// `sum(a ⊙ w)` for a constant weight tensor `w` of the same shape.
    pub fn dot_const(&mut self, a: Var, w: &Tensor<T>) -> Result<Var> {
        let va = self.value(a);
        if va.shape() != w.shape() {
            return Err(shape_err("dot_const", format!("{:?} vs {:?}", va.shape(), w.shape())));
        }
        let s = va.data().iter().zip(w.data()).map(|(&x, &y)| x * y).sum();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::scalar(s), Op::DotConst(a, w.data().to_vec()), rg)
    }

    pub fn gelu(&mut self, a: Var, approx: GeluApprox) -> Result<Var> {
        let out = self.value(a).map(|x| kernels::gelu(x, approx));
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Gelu(a, approx), rg)
    }

    pub fn silu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(kernels::silu);
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Silu(a), rg)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x.abs());
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Abs(a), rg)
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let v = self.value(a);
        if axis >= v.rank() {
            return Err(invalid("softmax", format!("axis {axis} out of range for {:?}", v.shape())));
        }
        let outer = v.shape()[..axis].iter().product();
        let len = v.shape()[axis];
        let inner = v.shape()[axis + 1..].iter().product();
        let data = kernels::softmax_axis(v.data(), outer, len, inner);
        let out = Tensor::new(v.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a]);
        self.push(out, Op::Softmax { x: a, outer, len, inner }, rg)
    }

    /// Log-softmax along the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let data = kernels::log_softmax_rows(v.data(), v.last_dim());
        let out = Tensor::new(v.shape().to_vec(), data)?;
        let rg = self.any_grad(&[a]);
        self.push(out, Op::LogSoftmax(a), rg)
    }

    pub fn rmsnorm(&mut self, x: Var, gamma: Var, eps: f64) -> Result<Var> {
        if eps < 0.0 {
            return Err(invalid("rmsnorm", "eps must be non-negative"));
        }
        let vx = self.value(x);
        let vg = self.value(gamma);
        if vg.rank() != 1 || vg.numel() != vx.last_dim() {
            return Err(shape_err("rmsnorm", format!("gamma {:?} vs input {:?}", vg.shape(), vx.shape())));
        }
        let (y, inv) = kernels::rmsnorm_rows(vx.data(), vg.data(), T::lit(eps));
        let out = Tensor::new(vx.shape().to_vec(), y)?;
        let rg = self.any_grad(&[x, gamma]);
        self.push(out, Op::RmsNorm { x, gamma, inv }, rg)
    }

    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let vx = self.value(x);
        let vg = self.value(gamma);
        let vb = self.value(beta);
        if vg.rank() != 1 || vg.numel() != vx.last_dim() || vb.shape() != vg.shape() {
            return Err(shape_err("layernorm", format!("gamma {:?} vs input {:?}", vg.shape(), vx.shape())));
        }
        let (y, xhat, inv) = kernels::layernorm_rows(vx.data(), vg.data(), vb.data(), T::lit(eps));
        let out = Tensor::new(vx.shape().to_vec(), y)?;
        let rg = self.any_grad(&[x, gamma, beta]);
        self.push(out, Op::LayerNorm { gamma, beta, x, xhat, inv }, rg)
    }

    /// Rotary position embedding on `x: [tokens, n_heads * head_dim]`.
    pub fn rope(&mut self, x: Var, positions: &[usize], n_heads: usize, base: f64) -> Result<Var> {
        let vx = self.value(x);
        let (rows, width) = as_matrix("rope", vx.shape())?;
        if n_heads == 0 || width % n_heads != 0 || (width / n_heads) % 2 != 0 {
            return Err(invalid("rope", format!("width {width} with {n_heads} heads needs an even head_dim")));
        }
        if positions.len() != rows {
            return Err(shape_err("rope", format!("{} positions for {rows} tokens", positions.len())));
        }
        let y = kernels::rope(vx.data(), positions, n_heads, width / n_heads, base, 1.0);
        let out = Tensor::new(vx.shape().to_vec(), y)?;
        let rg = self.any_grad(&[x]);
        self.push(
            out,
            Op::Rope {
                x,
                positions: positions.to_vec(),
                n_heads,
                base,
            },
            rg,
        )
    }

    /// Scaled dot-product attention over the packed segments of `layout`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, layout: Arc<AttentionLayout>) -> Result<Var> {
        self.same_shape("attention", q, k)?;
        self.same_shape("attention", q, v)?;
        let (rows, width) = as_matrix("attention", self.shape(q))?;
        if layout.n_heads == 0 || width % layout.n_heads != 0 {
            return Err(invalid("attention", format!("width {width} not divisible by {} heads", layout.n_heads)));
        }
        if layout.total_tokens() > rows {
            return Err(shape_err("attention", format!("layout covers {} tokens, have {rows}", layout.total_tokens())));
        }
        if let kernels::MaskRule::BlockCausal(groups) = &layout.mask {
            if groups.len() < rows {
                return Err(shape_err("attention", "block mask needs one group id per token"));
            }
        }
        let (out, probs) = kernels::attention_forward(
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            width,
            &layout,
        );
        let out = Tensor::new(vec![rows, width], out)?;
        let rg = self.any_grad(&[q, k, v]);
        self.push(out, Op::Attention { q, k, v, layout, probs }, rg)
    }

    /// Selects rows of a matrix; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let vx = self.value(x);
        let (rows, cols) = as_matrix("gather_rows", vx.shape())?;
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &r in idx {
            if r >= rows {
                return Err(shape_err("gather_rows", format!("row {r} out of {rows}")));
            }
            data.extend_from_slice(vx.row(r));
        }
        let out = Tensor::new(vec![idx.len(), cols], data)?;
        let rg = self.any_grad(&[x]);
        self.push(out, Op::GatherRows(x, idx.to_vec()), rg)
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(invalid("concat_rows", "no inputs"));
        };
        let (_, cols) = as_matrix("concat_rows", self.shape(first))?;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = as_matrix("concat_rows", self.shape(p))?;
            if c != cols {
                return Err(shape_err("concat_rows", format!("column counts {cols} and {c}")));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(vec![rows, cols], data)?;
        let rg = self.any_grad(parts);
        self.push(out, Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        let rg = self.any_grad(&[x]);
        self.push(out, Op::Reshape(x), rg)
    }

    /// Clears all gradients so that [`Graph::backward`] may run again.
    pub fn reset_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backward_done = false;
    }

    /// Reverse sweep from a scalar `seed`. Afterwards every leaf reachable
    /// from the seed holds `∂seed/∂leaf`; intermediate gradients are dropped.
    pub fn backward(&mut self, seed: Var) -> Result<()> {
        if self.backward_done {
            return Err(TensorError::BackwardTwice);
        }
        let seed_shape = self.shape(seed).to_vec();
        if seed_shape.iter().product::<usize>() != 1 {
            return Err(TensorError::NonScalarSeed(seed_shape));
        }
        self.backward_done = true;
        if !self.nodes[seed.0].requires_grad {
            return Ok(());
        }
        self.nodes[seed.0].grad = Some(Tensor::ones(seed_shape));
        for i in (0..=seed.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf | Op::Constant) {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.local_grads(i, &g);
            for (p, contrib) in contributions {
                self.accumulate(p, contrib);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, p: Var, contrib: Vec<T>) {
        let node = &mut self.nodes[p.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => {
                for (o, c) in g.data_mut().iter_mut().zip(contrib) {
                    *o += c;
                }
            }
            None => {
                let shape = node.value.shape().to_vec();
                node.grad = Some(Tensor::new(shape, contrib).expect("gradient shape matches value"));
            }
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Vector-Jacobian products of node `i` for upstream gradient `g`.
    fn local_grads(&self, i: usize, g: &Tensor<T>) -> Vec<(Var, Vec<T>)> {
        let gd = g.data();
        let mut out = Vec::new();
        match &self.nodes[i].op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let va = self.value(*a);
                let vb = self.value(*b);
                let (m, k) = (va.shape()[0], va.shape()[1]);
                let n = vb.shape()[1];
                if self.wants(*a) {
                    let mut da = vec![T::zero(); m * k];
                    T::gemm(m, n, k, T::one(), gd, (n, 1), vb.data(), (1, n), T::zero(), &mut da);
                    out.push((*a, da));
                }
                if self.wants(*b) {
                    let mut db = vec![T::zero(); k * n];
                    T::gemm(k, m, n, T::one(), va.data(), (1, k), gd, (n, 1), T::zero(), &mut db);
                    out.push((*b, db));
                }
            }
            Op::Add(a, b) => {
                out.push((*a, gd.to_vec()));
                out.push((*b, gd.to_vec()));
            }
            Op::Sub(a, b) => {
                out.push((*a, gd.to_vec()));
                out.push((*b, gd.iter().map(|&x| -x).collect()));
            }
            Op::Mul(a, b) => {
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                if self.wants(*a) {
                    out.push((*a, gd.iter().zip(vb).map(|(&x, &y)| x * y).collect()));
                }
                if self.wants(*b) {
                    out.push((*b, gd.iter().zip(va).map(|(&x, &y)| x * y).collect()));
                }
            }
            Op::Scale(a, s) => out.push((*a, gd.iter().map(|&x| x * *s).collect())),
            Op::AddBias(x, bias) => {
                out.push((*x, gd.to_vec()));
                if self.wants(*bias) {
                    let c = self.value(*bias).numel();
                    let mut db = vec![T::zero(); c];
                    for row in gd.chunks(c) {
                        for (o, &v) in db.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    out.push((*bias, db));
                }
            }
            Op::Sum(a) => out.push((*a, vec![gd[0]; self.value(*a).numel()])),
            Op::Mean(a) => {
                let n = self.value(*a).numel();
                out.push((*a, vec![gd[0] / T::lit(n as f64); n]));
            }
            Op::DotConst(a, w) => out.push((*a, w.iter().map(|&x| x * gd[0]).collect())),
            Op::Gelu(a, approx) => {
                let va = self.value(*a).data();
                out.push((*a, va.iter().zip(gd).map(|(&x, &d)| d * kernels::gelu_grad(x, *approx)).collect()));
            }
            Op::Silu(a) => {
                let va = self.value(*a).data();
                out.push((*a, va.iter().zip(gd).map(|(&x, &d)| d * kernels::silu_grad(x)).collect()));
            }
            Op::Abs(a) => {
                let va = self.value(*a).data();
                out.push((
                    *a,
                    va.iter()
                        .zip(gd)
                        .map(|(&x, &d)| if x > T::zero() { d } else if x < T::zero() { -d } else { T::zero() })
                        .collect(),
                ));
            }
            Op::Softmax { x, outer, len, inner } => {
                let y = self.nodes[i].value.data();
                out.push((*x, kernels::softmax_axis_backward(y, gd, *outer, *len, *inner)));
            }
            Op::LogSoftmax(x) => {
                let y = &self.nodes[i].value;
                out.push((*x, kernels::log_softmax_rows_backward(y.data(), gd, y.last_dim())));
            }
            Op::RmsNorm { x, gamma, inv } => {
                let (dx, dg) =
                    kernels::rmsnorm_rows_backward(self.value(*x).data(), self.value(*gamma).data(), inv, gd);
                out.push((*x, dx));
                out.push((*gamma, dg));
            }
            Op::LayerNorm { gamma, beta, x, xhat, inv } => {
                let (dx, dg, db) = kernels::layernorm_rows_backward(xhat, self.value(*gamma).data(), inv, gd);
                out.push((*x, dx));
                out.push((*gamma, dg));
                out.push((*beta, db));
            }
            Op::Rope { x, positions, n_heads, base } => {
                let width = self.value(*x).last_dim();
                out.push((*x, kernels::rope(gd, positions, *n_heads, width / n_heads, *base, -1.0)));
            }
            Op::Attention { q, k, v, layout, probs } => {
                let width = self.value(*q).last_dim();
                let (dq, dk, dv) = kernels::attention_backward(
                    self.value(*q).data(),
                    self.value(*k).data(),
                    self.value(*v).data(),
                    probs,
                    gd,
                    width,
                    layout,
                );
                out.push((*q, dq));
                out.push((*k, dk));
                out.push((*v, dv));
            }
            Op::GatherRows(x, idx) => {
                let vx = self.value(*x);
                let cols = vx.last_dim();
                let mut dx = vec![T::zero(); vx.numel()];
                for (r, &src) in idx.iter().enumerate() {
                    for (o, &v) in dx[src * cols..(src + 1) * cols].iter_mut().zip(&gd[r * cols..(r + 1) * cols]) {
                        *o += v;
                    }
                }
                out.push((*x, dx));
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    out.push((p, gd[offset..offset + n].to_vec()));
                    offset += n;
                }
            }
            Op::Reshape(x) => out.push((*x, gd.to_vec())),
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape.to_vec(), v).unwrap()
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 9.0])).unwrap();
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn grad_of_sum_of_squares_is_twice_x() {
        let mut g = Graph::<f64>::new();
        let vals = [1.0, -2.0, 3.5];
        let x = g.leaf(t(&[3], &vals)).unwrap();
        let sq = g.mul(x, x).unwrap();
        let s = g.sum(sq).unwrap();
        g.backward(s).unwrap();
        let expect: Vec<f64> = vals.iter().map(|v| 2.0 * v).collect();
        assert_eq!(g.grad(x).unwrap().data(), expect.as_slice());
    }

    #[test]
    fn backward_twice_is_a_state_error() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[1], &[2.0])).unwrap();
        let s = g.sum(x).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.backward(s), Err(TensorError::BackwardTwice));
        g.reset_grads();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0]);
    }

    #[test]
    fn non_scalar_seed_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0])).unwrap();
        assert!(matches!(g.backward(x), Err(TensorError::NonScalarSeed(_))));
    }

    #[test]
    fn constants_receive_no_grad() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0])).unwrap();
        let c = g.constant(t(&[2], &[3.0, 4.0])).unwrap();
        let p = g.mul(x, c).unwrap();
        let s = g.sum(p).unwrap();
        g.backward(s).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let mut g = Graph::<f32>::new();
        let bad = Tensor::new(vec![1], vec![f32::NAN]).unwrap();
        assert!(matches!(g.leaf(bad), Err(TensorError::NonFinite { .. })));
    }

    #[test]
    fn shared_input_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let rows = g.gather_rows(x, &[1, 1, 0]).unwrap();
        let s = g.sum(rows).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0, 1.0, 2.0, 2.0]);
    }
}
