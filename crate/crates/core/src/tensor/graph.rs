use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, mm_acc, mm_nt_acc, mm_tn_acc};
use super::Tensor;
use crate::error::{Error, Result};
use crate::math;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Bmm { a: Var, b: Var, trans_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Option<Var>,
        bias: Option<Var>,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Reshape(Var),
    SliceCols { a: Var, start: usize },
    RepeatRows { a: Var, reps: usize },
    SplitHeads { a: Var, batch: usize, heads: usize },
    MergeHeads { a: Var, batch: usize, heads: usize },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records operations as they run so that [`Graph::backward`] can replay them
/// in reverse.
///
/// Nodes are appended only, and every operation refers to nodes that already
/// exist, so the insertion order is a topological order and cycles cannot be
/// expressed. A graph is meant to live for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    no_grad: bool,
}

/// Gradients produced by one backward pass, indexed by leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when no path from
    /// `v` reaches the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient as a tensor, all zeros when `v` does not influence the loss.
    pub fn tensor(&self, v: Var) -> Tensor {
        let shape = &self.shapes[v.0];
        match self.get(v) {
            Some(g) => Tensor::new(shape.clone(), g.to_vec()).expect("gradient shape"),
            None => Tensor::zeros(shape),
        }
    }
}

fn suffix_broadcastable(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// A graph that records values only; nothing in it requires gradients.
    pub fn no_grad() -> Self {
        Graph {
            nodes: Vec::new(),
            no_grad: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let requires_grad = requires_grad && !self.no_grad;
        self.push(value, Op::Leaf, requires_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(
        &mut self,
        name: &'static str,
        value: Tensor,
        op: Op,
        inputs: &[Var],
    ) -> Result<Var> {
        value.ensure_finite(name)?;
        let rg = !self.no_grad && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, op, rg))
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::ShapeMismatch {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    /// Matrix product of two 2-D tensors.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.mismatch("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        mm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        self.push_checked("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    /// Batched product over the leading axis: `[g,m,k]·[g,k,n]`, or
    /// `[g,m,k]·[g,n,k]ᵀ` when `trans_b` is set.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(self.mismatch("bmm", a, b));
        }
        let (g, m, k) = (sa[0], sa[1], sa[2]);
        let n = if trans_b { sb[1] } else { sb[2] };
        let kb = if trans_b { sb[2] } else { sb[1] };
        if kb != k {
            return Err(self.mismatch("bmm", a, b));
        }
        let mut out = vec![0.0; g * m * n];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for i in 0..g {
            let ai = &ad[i * m * k..(i + 1) * m * k];
            let bi = &bd[i * k * n..(i + 1) * k * n];
            let oi = &mut out[i * m * n..(i + 1) * m * n];
            if trans_b {
                mm_nt_acc(ai, bi, oi, m, k, n);
            } else {
                mm_acc(ai, bi, oi, m, k, n);
            }
        }
        let value = Tensor::new(vec![g, m, n], out)?;
        self.push_checked("bmm", value, Op::Bmm { a, b, trans_b }, &[a, b])
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        if !suffix_broadcastable(self.shape(a), self.shape(b)) {
            return Err(self.mismatch(name, a, b));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let bn = bv.numel();
        let bd = bv.data();
        let data: Vec<f64> = av
            .data()
            .chunks_exact(bn)
            .flat_map(|chunk| chunk.iter().zip(bd).map(|(&x, &y)| f(x, y)))
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push_checked(name, value, op, &[a, b])
    }

    /// `a + b`, where `b`'s shape equals `a`'s or is a suffix of it (the
    /// leading dimensions of `a` repeat `b`).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product with the same broadcasting rule as [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x * c);
        self.push_checked("scale", value, Op::Scale(a, c), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(kernels::gelu);
        self.push_checked("gelu", value, Op::Gelu(a), &[a])
    }

    pub fn softmax_lastdim(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let c = av.cols();
        let mut out = vec![0.0; av.numel()];
        for (x, o) in av.data().chunks_exact(c).zip(out.chunks_exact_mut(c)) {
            kernels::softmax_row(x, o);
        }
        let value = Tensor::new(av.shape().to_vec(), out)?;
        self.push_checked("softmax", value, Op::Softmax(a), &[a])
    }

    /// Normalizes each row of the last axis to zero mean and unit population
    /// variance (`1/sqrt(var + eps)` scaling), then applies the optional gain
    /// and bias, both shaped like the last axis.
    pub fn layernorm_lastdim(
        &mut self,
        x: Var,
        gain: Option<Var>,
        bias: Option<Var>,
        eps: f64,
    ) -> Result<Var> {
        let d = self.value(x).cols();
        for p in [gain, bias].into_iter().flatten() {
            if self.shape(p) != [d] {
                return Err(self.mismatch("layernorm", x, p));
            }
        }
        let xv = self.value(x);
        let rows = xv.rows();
        let mut xhat = vec![0.0; xv.numel()];
        let mut inv_std = vec![0.0; rows];
        for (r, (row, out)) in xv
            .data()
            .chunks_exact(d)
            .zip(xhat.chunks_exact_mut(d))
            .enumerate()
        {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let s = 1.0 / math::sqrt(var + eps);
            inv_std[r] = s;
            for (o, &v) in out.iter_mut().zip(row) {
                *o = (v - mean) * s;
            }
        }
        let mut out = xhat.clone();
        if let Some(g) = gain {
            let gd = self.value(g).data();
            for row in out.chunks_exact_mut(d) {
                for (o, &gv) in row.iter_mut().zip(gd) {
                    *o *= gv;
                }
            }
        }
        if let Some(b) = bias {
            let bd = self.value(b).data();
            for row in out.chunks_exact_mut(d) {
                for (o, &bv) in row.iter_mut().zip(bd) {
                    *o += bv;
                }
            }
        }
        let value = Tensor::new(self.value(x).shape().to_vec(), out)?;
        let mut inputs = vec![x];
        inputs.extend(gain);
        inputs.extend(bias);
        self.push_checked(
            "layernorm",
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &inputs,
        )
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape)?;
        self.push_checked("reshape", value, Op::Reshape(a), &[a])
    }

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let sa = self.shape(a);
        if sa.len() != 2 || len == 0 || start + len > sa[1] {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                left: sa.to_vec(),
                right: vec![start, len],
            });
        }
        let (rows, cols) = (sa[0], sa[1]);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let value = Tensor::new(vec![rows, len], out)?;
        self.push_checked("slice_cols", value, Op::SliceCols { a, start }, &[a])
    }

    /// Repeats every row of a 2-D tensor `reps` times in place:
    /// `[b, h] -> [b * reps, h]`.
    pub fn repeat_rows(&mut self, a: Var, reps: usize) -> Result<Var> {
        let sa = self.shape(a);
        if sa.len() != 2 || reps == 0 {
            return Err(Error::ShapeMismatch {
                op: "repeat_rows",
                left: sa.to_vec(),
                right: vec![reps],
            });
        }
        let (rows, cols) = (sa[0], sa[1]);
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(rows * reps * cols);
        for r in 0..rows {
            for _ in 0..reps {
                out.extend_from_slice(&src[r * cols..(r + 1) * cols]);
            }
        }
        let value = Tensor::new(vec![rows * reps, cols], out)?;
        self.push_checked("repeat_rows", value, Op::RepeatRows { a, reps }, &[a])
    }

    /// `[batch * len, heads * d] -> [batch * heads, len, d]`.
    pub fn split_heads(&mut self, a: Var, batch: usize, heads: usize) -> Result<Var> {
        let sa = self.shape(a);
        if sa.len() != 2 || batch == 0 || heads == 0 || sa[0] % batch != 0 || sa[1] % heads != 0 {
            return Err(Error::ShapeMismatch {
                op: "split_heads",
                left: sa.to_vec(),
                right: vec![batch, heads],
            });
        }
        let (len, d) = (sa[0] / batch, sa[1] / heads);
        let src = self.value(a).data();
        let mut out = vec![0.0; src.len()];
        permute_heads(src, &mut out, batch, len, heads, d, false);
        let value = Tensor::new(vec![batch * heads, len, d], out)?;
        self.push_checked(
            "split_heads",
            value,
            Op::SplitHeads { a, batch, heads },
            &[a],
        )
    }

    /// Inverse of [`Graph::split_heads`].
    pub fn merge_heads(&mut self, a: Var, batch: usize, heads: usize) -> Result<Var> {
        let sa = self.shape(a);
        if sa.len() != 3 || batch == 0 || heads == 0 || sa[0] != batch * heads {
            return Err(Error::ShapeMismatch {
                op: "merge_heads",
                left: sa.to_vec(),
                right: vec![batch, heads],
            });
        }
        let (len, d) = (sa[1], sa[2]);
        let src = self.value(a).data();
        let mut out = vec![0.0; src.len()];
        permute_heads(src, &mut out, batch, len, heads, d, true);
        let value = Tensor::new(vec![batch * len, heads * d], out)?;
        self.push_checked(
            "merge_heads",
            value,
            Op::MergeHeads { a, batch, heads },
            &[a],
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum::<f64>();
        self.push_checked("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.numel() as f64;
        self.push_checked("mean", Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// `a·w + b` for a 2-D input, a `[in, out]` weight and an `[out]` bias.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add(y, b)
    }

    /// Reverse pass from a scalar `loss`. Every leaf created with
    /// `requires_grad` and reachable from the loss receives `∂loss/∂leaf`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::ShapeMismatch {
                op: "backward",
                left: lv.shape().to_vec(),
                right: Vec::new(),
            });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
        grads.resize_with(n, || None);
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.backprop_node(node, &g, &mut grads);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        // Inputs always precede their consumer.
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let len = self.nodes[v.0].value.numel();
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if rg(*a) {
                    let bd = self.value(*b).data();
                    acc(*a, &mut |ga| mm_nt_acc(g, bd, ga, m, n, k));
                }
                if rg(*b) {
                    let ad = self.value(*a).data();
                    acc(*b, &mut |gb| mm_tn_acc(ad, g, gb, m, k, n));
                }
            }
            Op::Bmm { a, b, trans_b } => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (bt, m, k) = (sa[0], sa[1], sa[2]);
                let n = if *trans_b { sb[1] } else { sb[2] };
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                if rg(*a) {
                    acc(*a, &mut |ga| {
                        for i in 0..bt {
                            let gi = &g[i * m * n..(i + 1) * m * n];
                            let bi = &bd[i * k * n..(i + 1) * k * n];
                            let gai = &mut ga[i * m * k..(i + 1) * m * k];
                            if *trans_b {
                                // out = A·Bᵀ, B is [n,k]: dA = dO·B
                                mm_acc(gi, bi, gai, m, n, k);
                            } else {
                                // B is [k,n]: dA = dO·Bᵀ
                                mm_nt_acc(gi, bi, gai, m, n, k);
                            }
                        }
                    });
                }
                if rg(*b) {
                    acc(*b, &mut |gb| {
                        for i in 0..bt {
                            let gi = &g[i * m * n..(i + 1) * m * n];
                            let ai = &ad[i * m * k..(i + 1) * m * k];
                            let gbi = &mut gb[i * k * n..(i + 1) * k * n];
                            if *trans_b {
                                // dB[n,k] = dOᵀ·A
                                mm_tn_acc(gi, ai, gbi, m, n, k);
                            } else {
                                // dB[k,n] = Aᵀ·dO
                                mm_tn_acc(ai, gi, gbi, m, k, n);
                            }
                        }
                    });
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if rg(*a) {
                    acc(*a, &mut |ga| {
                        for (x, &y) in ga.iter_mut().zip(g) {
                            *x += y;
                        }
                    });
                }
                if rg(*b) {
                    acc(*b, &mut |gb| {
                        let bn = gb.len();
                        for chunk in g.chunks_exact(bn) {
                            for (x, &y) in gb.iter_mut().zip(chunk) {
                                *x += sign * y;
                            }
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                let bn = bd.len();
                if rg(*a) {
                    acc(*a, &mut |ga| {
                        for (gc, gac) in g.chunks_exact(bn).zip(ga.chunks_exact_mut(bn)) {
                            for ((x, &y), &bv) in gac.iter_mut().zip(gc).zip(bd) {
                                *x += y * bv;
                            }
                        }
                    });
                }
                if rg(*b) {
                    acc(*b, &mut |gb| {
                        for (gc, ac) in g.chunks_exact(bn).zip(ad.chunks_exact(bn)) {
                            for ((x, &y), &av) in gb.iter_mut().zip(gc).zip(ac) {
                                *x += y * av;
                            }
                        }
                    });
                }
            }
            Op::Scale(a, c) => {
                acc(*a, &mut |ga| {
                    for (x, &y) in ga.iter_mut().zip(g) {
                        *x += c * y;
                    }
                });
            }
            Op::Gelu(a) => {
                let ad = self.value(*a).data();
                acc(*a, &mut |ga| {
                    for ((x, &y), &v) in ga.iter_mut().zip(g).zip(ad) {
                        *x += y * kernels::gelu_grad(v);
                    }
                });
            }
            Op::Softmax(a) => {
                let yd = node.value.data();
                let c = node.value.cols();
                acc(*a, &mut |ga| {
                    for ((gr, yr), gar) in g
                        .chunks_exact(c)
                        .zip(yd.chunks_exact(c))
                        .zip(ga.chunks_exact_mut(c))
                    {
                        let dotp = kernels::dot(gr, yr);
                        for ((x, &gy), &y) in gar.iter_mut().zip(gr).zip(yr) {
                            *x += y * (gy - dotp);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let d = node.value.cols();
                if let Some(b) = bias {
                    if rg(*b) {
                        acc(*b, &mut |gb| {
                            for gr in g.chunks_exact(d) {
                                for (x, &y) in gb.iter_mut().zip(gr) {
                                    *x += y;
                                }
                            }
                        });
                    }
                }
                if let Some(gn) = gain {
                    if rg(*gn) {
                        acc(*gn, &mut |gg| {
                            for (gr, xr) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                                for ((x, &y), &xh) in gg.iter_mut().zip(gr).zip(xr) {
                                    *x += y * xh;
                                }
                            }
                        });
                    }
                }
                if rg(*x) {
                    let gain_data = gain.map(|v| self.value(v).data());
                    let mut dxhat = vec![0.0; d];
                    acc(*x, &mut |gx| {
                        for (r, ((gr, xr), gxr)) in g
                            .chunks_exact(d)
                            .zip(xhat.chunks_exact(d))
                            .zip(gx.chunks_exact_mut(d))
                            .enumerate()
                        {
                            match gain_data {
                                Some(gd) => {
                                    for ((o, &y), &gv) in dxhat.iter_mut().zip(gr).zip(gd) {
                                        *o = y * gv;
                                    }
                                }
                                None => dxhat.copy_from_slice(gr),
                            }
                            let mean_d = dxhat.iter().sum::<f64>() / d as f64;
                            let mean_dx = kernels::dot(&dxhat, xr) / d as f64;
                            let s = inv_std[r];
                            for ((o, &dh), &xh) in gxr.iter_mut().zip(&dxhat).zip(xr) {
                                *o += s * (dh - mean_d - xh * mean_dx);
                            }
                        }
                    });
                }
            }
            Op::Reshape(a) => {
                acc(*a, &mut |ga| {
                    for (x, &y) in ga.iter_mut().zip(g) {
                        *x += y;
                    }
                });
            }
            Op::SliceCols { a, start } => {
                let cols = self.shape(*a)[1];
                let len = node.value.cols();
                acc(*a, &mut |ga| {
                    for (gr, gar) in g.chunks_exact(len).zip(ga.chunks_exact_mut(cols)) {
                        for (x, &y) in gar[*start..*start + len].iter_mut().zip(gr) {
                            *x += y;
                        }
                    }
                });
            }
            Op::RepeatRows { a, reps } => {
                let cols = node.value.cols();
                acc(*a, &mut |ga| {
                    for (gar, block) in ga
                        .chunks_exact_mut(cols)
                        .zip(g.chunks_exact(cols * reps))
                    {
                        for gr in block.chunks_exact(cols) {
                            for (x, &y) in gar.iter_mut().zip(gr) {
                                *x += y;
                            }
                        }
                    }
                });
            }
            Op::SplitHeads { a, batch, heads } => {
                let s = node.value.shape();
                let (len, d) = (s[1], s[2]);
                let mut tmp = vec![0.0; g.len()];
                permute_heads(g, &mut tmp, *batch, len, *heads, d, true);
                acc(*a, &mut |ga| {
                    for (x, &y) in ga.iter_mut().zip(&tmp) {
                        *x += y;
                    }
                });
            }
            Op::MergeHeads { a, batch, heads } => {
                let s = self.shape(*a);
                let (len, d) = (s[1], s[2]);
                let mut tmp = vec![0.0; g.len()];
                permute_heads(g, &mut tmp, *batch, len, *heads, d, false);
                acc(*a, &mut |ga| {
                    for (x, &y) in ga.iter_mut().zip(&tmp) {
                        *x += y;
                    }
                });
            }
            Op::Sum(a) => {
                let gv = g[0];
                acc(*a, &mut |ga| {
                    for x in ga.iter_mut() {
                        *x += gv;
                    }
                });
            }
            Op::Mean(a) => {
                let n = self.value(*a).numel() as f64;
                let gv = g[0] / n;
                acc(*a, &mut |ga| {
                    for x in ga.iter_mut() {
                        *x += gv;
                    }
                });
            }
        }
    }
}

/// Moves data between the token-major layout `[batch, len, heads, d]` and the
/// head-major layout `[batch, heads, len, d]`. `merge` selects the direction
/// head-major → token-major.
fn permute_heads(
    src: &[f64],
    dst: &mut [f64],
    batch: usize,
    len: usize,
    heads: usize,
    d: usize,
    merge: bool,
) {
    for b in 0..batch {
        for l in 0..len {
            for h in 0..heads {
                let tok = ((b * len + l) * heads + h) * d;
                let head = ((b * heads + h) * len + l) * d;
                let (from, to) = if merge { (head, tok) } else { (tok, head) };
                dst[to..to + d].copy_from_slice(&src[from..from + d]);
            }
        }
    }
}
