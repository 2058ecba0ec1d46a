//! Tape-based reverse-mode automatic differentiation.
//!
//! A [`Tape`] owns every tensor produced during one forward pass. Operations
//! append a node holding the result and the recipe needed to push gradients
//! back to its inputs; because nodes are only ever appended, tape order is a
//! topological order and [`Tape::backward`] is a single reverse sweep.
//!
//! ```
//! use cotask_core::autodiff::Tape;
//! use cotask_core::Tensor;
//!
//! let mut tape = Tape::new();
//! let w = tape.leaf(Tensor::vector(vec![3.0]).with_requires_grad(true));
//! let sq = tape.mul(w, w).unwrap();
//! let loss = tape.sum(sq);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(w).unwrap(), &[6.0]);
//! ```

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{self, axis_extents, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool, batch: usize, m: usize, k: usize, n: usize },
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulRow(Var, Var),
    ScaleBy(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Gelu(Var, Vec<f64>),
    Sum(Var),
    Mean(Var),
    MeanAxis { a: Var, outer: usize, len: usize, inner: usize },
    LayerNorm { a: Var, inv_std: Vec<f64> },
    Softmax(Var),
    Dropout { a: Var, scale_mask: Vec<f64> },
    Concat { parts: Vec<Var>, outer: usize, inner: usize, lens: Vec<usize> },
    Slice { a: Var, outer: usize, len: usize, inner: usize, start: usize },
    Select { a: Var, index: usize },
    GatherRows { a: Var, rows: Vec<usize> },
    Reshape(Var),
    Permute { a: Var, perm: Vec<usize> },
    Bce { p: Var, target: Vec<f64>, eps: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation for a later gradient sweep.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_done: bool,
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

    /// Adds an input tensor. Gradients are tracked iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let requires_grad = t.requires_grad();
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        // Untracked results are recorded as plain constants.
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            value: Tensor::from_parts(shape, data),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    /// Matrix product over the last two axes. Leading axes of `a` and `b`
    /// must agree (batched product) or `b` must be 2-D (shared right operand).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ` over the last two axes.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let op_name = if trans_b { "matmul_t" } else { "matmul" };
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 {
            return Err(Error::shape(op_name, &sa, &sb));
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = if trans_b {
            (sb[sb.len() - 1], sb[sb.len() - 2])
        } else {
            (sb[sb.len() - 2], sb[sb.len() - 1])
        };
        let lead_a = &sa[..sa.len() - 2];
        let lead_b = &sb[..sb.len() - 2];
        if k != kb || lead_a != lead_b {
            return Err(Error::shape(op_name, &sa, &sb));
        }
        let batch: usize = lead_a.iter().product();
        let mut out = vec![0.0; batch * m * n];
        let (da, db) = (self.data(a), self.data(b));
        for g in 0..batch {
            let ag = &da[g * m * k..(g + 1) * m * k];
            let bg = &db[g * k * n..(g + 1) * k * n];
            let cg = &mut out[g * m * n..(g + 1) * m * n];
            if trans_b {
                tensor::gemm_nt(ag, bg, cg, m, k, n);
            } else {
                tensor::gemm_nn(ag, bg, cg, m, k, n);
            }
        }
        let mut shape = lead_a.to_vec();
        shape.extend_from_slice(&[m, n]);
        Ok(self.push(shape, out, Op::MatMul { a, b, trans_b, batch, m, k, n }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Add(a, b), &[a, b]))
    }

    /// Adds a vector along the last axis of `a` (bias broadcast).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let n = self.row_compatible("add_row", a, row)?;
        let r = self.data(row);
        let out = self
            .data(a)
            .chunks(n)
            .flat_map(|chunk| chunk.iter().zip(r).map(|(x, y)| x + y))
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::AddRow(a, row), &[a, row]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Mul(a, b), &[a, b]))
    }

    /// Multiplies every row of `a` elementwise by `row` (gain broadcast).
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let n = self.row_compatible("mul_row", a, row)?;
        let r = self.data(row);
        let out = self
            .data(a)
            .chunks(n)
            .flat_map(|chunk| chunk.iter().zip(r).map(|(x, y)| x * y))
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::MulRow(a, row), &[a, row]))
    }

    /// Multiplies `a` by a one-element tensor.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if !self.value(s).is_scalar() {
            return Err(Error::shape("scale_by", self.shape(a), self.shape(s)));
        }
        let c = self.value(s).item();
        let out = self.data(a).iter().map(|x| x * c).collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::ScaleBy(a, s), &[a, s]))
    }

    /// Multiplies `a` by a constant.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.data(a).iter().map(|x| x * c).collect();
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, c), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.data(a).iter().map(|&x| tensor::sigmoid(x)).collect();
        self.push(self.shape(a).to_vec(), out, Op::Sigmoid(a), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let (out, deriv): (Vec<f64>, Vec<f64>) =
            self.data(a).iter().map(|&x| tensor::gelu(x)).unzip();
        self.push(self.shape(a).to_vec(), out, Op::Gelu(a, deriv), &[a])
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(Vec::new(), vec![s], Op::Sum(a), &[a])
    }

    /// Mean of all elements, as a scalar.
    pub fn mean(&mut self, a: Var) -> Var {
        let d = self.data(a);
        let s = d.iter().sum::<f64>() / d.len() as f64;
        self.push(Vec::new(), vec![s], Op::Mean(a), &[a])
    }

    /// Mean over one axis, which is removed from the shape.
    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(Error::shape("mean_over_axis", &shape, &[axis]));
        }
        let (outer, len, inner) = axis_extents(&shape, axis);
        let d = self.data(a);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &d[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (dst, &x) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *dst += x;
                }
            }
        }
        let inv = 1.0 / len as f64;
        out.iter_mut().for_each(|x| *x *= inv);
        let mut new_shape = shape;
        new_shape.remove(axis);
        Ok(self.push(new_shape, out, Op::MeanAxis { a, outer, len, inner }, &[a]))
    }

    /// Normalises each row over the last axis to zero mean and unit variance.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let n = self.shape(a).last().copied().unwrap_or(1);
        let mut out = Vec::with_capacity(self.value(a).numel());
        let mut inv_std = Vec::new();
        for row in self.data(a).chunks(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / libm::sqrt(var + eps);
            inv_std.push(is);
            out.extend(row.iter().map(|x| (x - mean) * is));
        }
        self.push(self.shape(a).to_vec(), out, Op::LayerNorm { a, inv_std }, &[a])
    }

    /// Softmax over the last axis. Where `mask` is given (one flag per
    /// element, `false` = excluded), excluded entries act as `-inf` logits.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if let Some(m) = mask {
            if m.len() != self.value(a).numel() {
                return Err(Error::shape("softmax_over_axis", &shape, &[m.len()]));
            }
        }
        let n = shape.last().copied().unwrap_or(1);
        let d = self.data(a);
        let mut out = vec![0.0; d.len()];
        for (r, row) in d.chunks(n).enumerate() {
            let keep = |j: usize| mask.is_none_or(|m| m[r * n + j]);
            let max = (0..n)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let o = &mut out[r * n..(r + 1) * n];
            let mut z = 0.0;
            for j in 0..n {
                if keep(j) {
                    o[j] = libm::exp(row[j] - max);
                    z += o[j];
                }
            }
            o.iter_mut().for_each(|x| *x /= z);
        }
        Ok(self.push(shape, out, Op::Softmax(a), &[a]))
    }

    /// Inverted dropout: zeroes each entry with probability `p` and scales
    /// survivors by `1/(1-p)`. The identity when `train` is false.
    pub fn dropout(&mut self, a: Var, p: f64, rng: &mut Rng, train: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!("dropout probability {p} outside [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let scale_mask: Vec<f64> = (0..self.value(a).numel())
            .map(|_| if rng.uniform() < p { 0.0 } else { keep })
            .collect();
        let out = self.data(a).iter().zip(&scale_mask).map(|(x, m)| x * m).collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Dropout { a, scale_mask }, &[a]))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Input("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", &base, &[axis]));
        }
        let mut lens = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            let ok = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !ok {
                return Err(Error::shape("concat", &base, s));
            }
            lens.push(s[axis]);
        }
        let (outer, _, inner) = axis_extents(&base, axis);
        let total: usize = lens.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&p, &len) in parts.iter().zip(&lens) {
                out.extend_from_slice(&self.data(p)[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let op = Op::Concat {
            parts: parts.to_vec(),
            outer,
            inner,
            lens,
        };
        Ok(self.push(shape, out, op, parts))
    }

    /// `a[.., start..end, ..]` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() || start >= end || end > shape[axis] {
            return Err(Error::shape("slice", &shape, &[axis, start, end]));
        }
        let (outer, len, inner) = axis_extents(&shape, axis);
        let d = self.data(a);
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            out.extend_from_slice(&d[(o * len + start) * inner..(o * len + end) * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = end - start;
        let op = Op::Slice { a, outer, len, inner, start };
        Ok(self.push(new_shape, out, op, &[a]))
    }

    /// One element (flat row-major index) as a scalar.
    pub fn select(&mut self, a: Var, index: usize) -> Result<Var> {
        let d = self.data(a);
        if index >= d.len() {
            return Err(Error::shape("select", self.shape(a), &[index]));
        }
        let v = d[index];
        Ok(self.push(Vec::new(), vec![v], Op::Select { a, index }, &[a]))
    }

    /// Gathers rows of a 2-D tensor (embedding lookup).
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 2 {
            return Err(Error::shape("gather_rows", &shape, &[rows.len()]));
        }
        let cols = shape[1];
        if let Some(&bad) = rows.iter().find(|&&r| r >= shape[0]) {
            return Err(Error::shape("gather_rows", &shape, &[bad]));
        }
        let d = self.data(a);
        let mut out = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            out.extend_from_slice(&d[r * cols..(r + 1) * cols]);
        }
        let op = Op::GatherRows {
            a,
            rows: rows.to_vec(),
        };
        Ok(self.push(vec![rows.len(), cols], out, op, &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).numel() {
            return Err(Error::shape("reshape", self.shape(a), shape));
        }
        let out = self.data(a).to_vec();
        Ok(self.push(shape.to_vec(), out, Op::Reshape(a), &[a]))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let mut seen = vec![false; shape.len()];
        let valid = perm.len() == shape.len()
            && perm.iter().all(|&p| p < shape.len() && !core::mem::replace(&mut seen[p], true));
        if !valid {
            return Err(Error::shape("permute", &shape, perm));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let out = permute_data(self.data(a), &shape, perm);
        let op = Op::Permute {
            a,
            perm: perm.to_vec(),
        };
        Ok(self.push(out_shape, out, op, &[a]))
    }

    /// Mean binary cross-entropy of probabilities `p` against `target`,
    /// with `p` clamped to `[eps, 1 - eps]` before the logarithm.
    pub fn bce(&mut self, p: Var, target: &Tensor, eps: f64) -> Result<Var> {
        if self.shape(p) != target.shape() {
            return Err(Error::shape("bce", self.shape(p), target.shape()));
        }
        let d = self.data(p);
        let n = d.len() as f64;
        let loss = d
            .iter()
            .zip(target.data())
            .map(|(&pi, &y)| {
                let pc = pi.clamp(eps, 1.0 - eps);
                -(y * libm::log(pc) + (1.0 - y) * libm::log(1.0 - pc))
            })
            .sum::<f64>()
            / n;
        let op = Op::Bce {
            p,
            target: target.data().to_vec(),
            eps,
        };
        Ok(self.push(Vec::new(), vec![loss], op, &[p]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn row_compatible(&self, op: &'static str, a: Var, row: Var) -> Result<usize> {
        let sa = self.shape(a);
        let sr = self.shape(row);
        match (sa.last(), sr) {
            (Some(&n), [m]) if n == *m && n > 0 => Ok(n),
            _ => Err(Error::shape(op, sa, sr)),
        }
    }

    /// Clears all gradients so `backward` may run again.
    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.value.zero_grad();
        }
        self.backward_done = false;
    }

    /// Propagates d(root)/d(node) to every reachable leaf that requires a
    /// gradient. Intermediate gradients are released once consumed.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward on an empty tape".into()));
        }
        if !self.value(root).is_scalar() {
            return Err(Error::shape("backward", self.shape(root), &[]));
        }
        if self.backward_done {
            return Err(Error::State("backward called twice without zero_grad".into()));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g, &mut grads);
        }
        for (idx, g) in grads.into_iter().enumerate() {
            if let Some(g) = g {
                let node = &mut self.nodes[idx];
                let acc = match node.value.grad() {
                    Some(prev) => prev.iter().zip(&g).map(|(a, b)| a + b).collect(),
                    None => g,
                };
                node.value.set_grad(Some(acc));
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, trans_b, batch, m, k, n } => {
                let (da, db) = (self.data(a), self.data(b));
                if self.requires_grad(a) {
                    let ga = self.grad_buf(grads, a);
                    for gi in 0..batch {
                        let gc = &g[gi * m * n..(gi + 1) * m * n];
                        let bg = &db[gi * k * n..(gi + 1) * k * n];
                        let dst = &mut ga[gi * m * k..(gi + 1) * m * k];
                        if trans_b {
                            tensor::gemm_nn(gc, bg, dst, m, n, k);
                        } else {
                            tensor::gemm_nt(gc, bg, dst, m, n, k);
                        }
                    }
                }
                if self.requires_grad(b) {
                    let gb = self.grad_buf(grads, b);
                    for gi in 0..batch {
                        let gc = &g[gi * m * n..(gi + 1) * m * n];
                        let ag = &da[gi * m * k..(gi + 1) * m * k];
                        let dst = &mut gb[gi * k * n..(gi + 1) * k * n];
                        if trans_b {
                            tensor::gemm_tn(gc, ag, dst, n, m, k);
                        } else {
                            tensor::gemm_tn(ag, gc, dst, k, m, n);
                        }
                    }
                }
            }
            &Op::Add(a, b) => {
                self.accumulate(grads, a, |ga| axpy(ga, g, 1.0));
                self.accumulate(grads, b, |gb| axpy(gb, g, 1.0));
            }
            &Op::AddRow(a, row) => {
                self.accumulate(grads, a, |ga| axpy(ga, g, 1.0));
                self.accumulate(grads, row, |gr| {
                    let n = gr.len();
                    for chunk in g.chunks(n) {
                        axpy(gr, chunk, 1.0);
                    }
                });
            }
            &Op::Mul(a, b) => {
                let (da, db) = (self.data(a), self.data(b));
                self.accumulate(grads, a, |ga| {
                    for ((x, &gi), &y) in ga.iter_mut().zip(g).zip(db) {
                        *x += gi * y;
                    }
                });
                self.accumulate(grads, b, |gb| {
                    for ((x, &gi), &y) in gb.iter_mut().zip(g).zip(da) {
                        *x += gi * y;
                    }
                });
            }
            &Op::MulRow(a, row) => {
                let (da, dr) = (self.data(a), self.data(row));
                let n = dr.len();
                self.accumulate(grads, a, |ga| {
                    for (gchunk, achunk) in ga.chunks_mut(n).zip(g.chunks(n)) {
                        for ((x, &gi), &r) in gchunk.iter_mut().zip(achunk).zip(dr) {
                            *x += gi * r;
                        }
                    }
                });
                self.accumulate(grads, row, |gr| {
                    for (gchunk, achunk) in g.chunks(n).zip(da.chunks(n)) {
                        for ((x, &gi), &av) in gr.iter_mut().zip(gchunk).zip(achunk) {
                            *x += gi * av;
                        }
                    }
                });
            }
            &Op::ScaleBy(a, s) => {
                let c = self.value(s).item();
                let da = self.data(a);
                self.accumulate(grads, a, |ga| axpy(ga, g, c));
                self.accumulate(grads, s, |gs| {
                    gs[0] += g.iter().zip(da).map(|(x, y)| x * y).sum::<f64>();
                });
            }
            &Op::Scale(a, c) => self.accumulate(grads, a, |ga| axpy(ga, g, c)),
            &Op::Sigmoid(a) => self.accumulate(grads, a, |ga| {
                for ((x, &gi), &y) in ga.iter_mut().zip(g).zip(out) {
                    *x += gi * y * (1.0 - y);
                }
            }),
            Op::Gelu(a, deriv) => self.accumulate(grads, *a, |ga| {
                for ((x, &gi), &dy) in ga.iter_mut().zip(g).zip(deriv) {
                    *x += gi * dy;
                }
            }),
            &Op::Sum(a) => self.accumulate(grads, a, |ga| ga.iter_mut().for_each(|x| *x += g[0])),
            &Op::Mean(a) => self.accumulate(grads, a, |ga| {
                let c = g[0] / ga.len() as f64;
                ga.iter_mut().for_each(|x| *x += c);
            }),
            &Op::MeanAxis { a, outer, len, inner } => self.accumulate(grads, a, |ga| {
                let inv = 1.0 / len as f64;
                for o in 0..outer {
                    let src = &g[o * inner..(o + 1) * inner];
                    for l in 0..len {
                        let dst = &mut ga[(o * len + l) * inner..(o * len + l + 1) * inner];
                        axpy(dst, src, inv);
                    }
                }
            }),
            Op::LayerNorm { a, inv_std } => self.accumulate(grads, *a, |ga| {
                let n = ga.len() / inv_std.len();
                for (r, &is) in inv_std.iter().enumerate() {
                    let (gr, yr) = (&g[r * n..(r + 1) * n], &out[r * n..(r + 1) * n]);
                    let mean_g = gr.iter().sum::<f64>() / n as f64;
                    let mean_gy = gr.iter().zip(yr).map(|(x, y)| x * y).sum::<f64>() / n as f64;
                    for j in 0..n {
                        ga[r * n + j] += is * (gr[j] - mean_g - yr[j] * mean_gy);
                    }
                }
            }),
            &Op::Softmax(a) => self.accumulate(grads, a, |ga| {
                let n = node.value.shape().last().copied().unwrap_or(1);
                for ((gsrc, y), dst) in g.chunks(n).zip(out.chunks(n)).zip(ga.chunks_mut(n)) {
                    let dot: f64 = gsrc.iter().zip(y).map(|(x, y)| x * y).sum();
                    for j in 0..n {
                        dst[j] += y[j] * (gsrc[j] - dot);
                    }
                }
            }),
            Op::Dropout { a, scale_mask } => self.accumulate(grads, *a, |ga| {
                for ((x, &gi), &m) in ga.iter_mut().zip(g).zip(scale_mask) {
                    *x += gi * m;
                }
            }),
            Op::Concat { parts, outer, inner, lens } => {
                let total: usize = lens.iter().sum();
                let mut offset = 0;
                for (&p, &len) in parts.iter().zip(lens) {
                    self.accumulate(grads, p, |gp| {
                        for o in 0..*outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + len) * inner];
                            axpy(&mut gp[o * len * inner..(o + 1) * len * inner], src, 1.0);
                        }
                    });
                    offset += len;
                }
            }
            &Op::Slice { a, outer, len, inner, start } => self.accumulate(grads, a, |ga| {
                let width = g.len() / outer;
                for o in 0..outer {
                    let dst = &mut ga[(o * len + start) * inner..(o * len + start) * inner + width];
                    axpy(dst, &g[o * width..(o + 1) * width], 1.0);
                }
            }),
            &Op::Select { a, index } => self.accumulate(grads, a, |ga| ga[index] += g[0]),
            Op::GatherRows { a, rows } => self.accumulate(grads, *a, |ga| {
                let cols = g.len() / rows.len().max(1);
                for (i, &r) in rows.iter().enumerate() {
                    axpy(&mut ga[r * cols..(r + 1) * cols], &g[i * cols..(i + 1) * cols], 1.0);
                }
            }),
            &Op::Reshape(a) => self.accumulate(grads, a, |ga| axpy(ga, g, 1.0)),
            Op::Permute { a, perm } => {
                let mut inverse = vec![0; perm.len()];
                for (i, &p) in perm.iter().enumerate() {
                    inverse[p] = i;
                }
                let back = permute_data(g, node.value.shape(), &inverse);
                self.accumulate(grads, *a, |ga| axpy(ga, &back, 1.0));
            }
            Op::Bce { p, target, eps } => {
                let dp = self.data(*p);
                let n = dp.len() as f64;
                self.accumulate(grads, *p, |gp| {
                    for ((x, &pi), &y) in gp.iter_mut().zip(dp).zip(target) {
                        if pi < *eps || pi > 1.0 - eps {
                            continue;
                        }
                        *x += g[0] * (pi - y) / (pi * (1.0 - pi)) / n;
                    }
                });
            }
        }
    }

    fn grad_buf<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut Vec<f64> {
        let n = self.value(v).numel();
        grads[v.0].get_or_insert_with(|| vec![0.0; n])
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        if self.requires_grad(v) {
            f(self.grad_buf(grads, v));
        }
    }
}

fn axpy(dst: &mut [f64], src: &[f64], c: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += c * s;
    }
}

fn permute_data(data: &[f64], shape: &[usize], perm: &[usize]) -> Vec<f64> {
    let rank = shape.len();
    let mut strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let out_strides: Vec<usize> = perm.iter().map(|&p| strides[p]).collect();
    // Copy whole runs when the innermost axis stays in place.
    let (run, outer) = if rank > 0 && perm[rank - 1] == rank - 1 {
        (shape[rank - 1], rank - 1)
    } else {
        (1, rank)
    };
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; outer];
    for _ in 0..data.len() / run.max(1) {
        let src: usize = idx.iter().zip(&out_strides).map(|(i, s)| i * s).sum();
        out.extend_from_slice(&data[src..src + run]);
        for ax in (0..outer).rev() {
            idx[ax] += 1;
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(t: &mut Tape, shape: &[usize], data: &[f64]) -> Var {
        t.leaf(Tensor::new(shape.to_vec(), data.to_vec()).unwrap().with_requires_grad(true))
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![0.0, 0.0]));
        let y = t.sigmoid(x);
        assert_eq!(t.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn identity_matmul() {
        let mut t = Tape::new();
        let i = t.constant(Tensor::eye(2));
        let m = t.constant(Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap());
        let y = t.matmul(i, m).unwrap();
        assert_eq!(t.value(y).data(), &[3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn mean_over_axis_zero() {
        let mut t = Tape::new();
        let m = t.constant(Tensor::matrix(2, 2, vec![1.0, 3.0, 5.0, 7.0]).unwrap());
        let y = t.mean_axis(m, 0).unwrap();
        assert_eq!(t.shape(y), &[2]);
        assert_eq!(t.value(y).data(), &[3.0, 5.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err();
        assert_eq!(err, Error::shape("matmul", &[2, 3], &[2, 3]));
    }

    #[test]
    fn dropout_probability_is_validated() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[4]));
        let mut rng = Rng::new(0);
        assert!(matches!(t.dropout(a, 1.0, &mut rng, true), Err(Error::Config(_))));
        assert!(matches!(t.dropout(a, -0.1, &mut rng, true), Err(Error::Config(_))));
    }

    #[test]
    fn grad_of_square() {
        let mut t = Tape::new();
        let w = param(&mut t, &[1], &[3.0]);
        let sq = t.mul(w, w).unwrap();
        let root = t.sum(sq);
        t.backward(root).unwrap();
        assert_eq!(t.grad(w).unwrap(), &[6.0]);
    }

    #[test]
    fn grad_of_sigmoid_at_zero() {
        let mut t = Tape::new();
        let w = param(&mut t, &[1], &[0.0]);
        let s = t.sigmoid(w);
        let root = t.sum(s);
        t.backward(root).unwrap();
        assert_eq!(t.grad(w).unwrap(), &[0.25]);
    }

    #[test]
    fn grad_of_mean() {
        let mut t = Tape::new();
        let w = param(&mut t, &[2], &[2.0, 4.0]);
        let root = t.mean(w);
        t.backward(root).unwrap();
        assert_eq!(t.grad(w).unwrap(), &[0.5, 0.5]);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut t = Tape::new();
        let w = param(&mut t, &[2], &[2.0, 4.0]);
        let s = t.sigmoid(w);
        assert!(matches!(t.backward(s), Err(Error::Shape { .. })));
    }

    #[test]
    fn double_backward_is_a_state_error() {
        let mut t = Tape::new();
        let w = param(&mut t, &[1], &[1.0]);
        let root = t.sum(w);
        t.backward(root).unwrap();
        assert!(matches!(t.backward(root), Err(Error::State(_))));
        t.zero_grad();
        t.backward(root).unwrap();
        assert_eq!(t.grad(w).unwrap(), &[1.0]);
    }

    #[test]
    fn empty_tape_backward_fails() {
        let mut t = Tape::new();
        assert!(matches!(t.backward(Var(0)), Err(Error::State(_))));
    }

    #[test]
    fn untracked_inputs_record_no_op() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::vector(vec![1.0]));
        let b = t.sigmoid(a);
        assert!(!t.requires_grad(b));
    }

    #[test]
    fn masked_softmax_ignores_masked_entries() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::matrix(1, 3, vec![1.0, 2.0, 100.0]).unwrap());
        let y = t.softmax(a, Some(&[true, true, false])).unwrap();
        let d = t.value(y).data();
        assert_eq!(d[2], 0.0);
        assert!((d[0] + d[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn permute_round_trip() {
        let mut t = Tape::new();
        let data: Vec<f64> = (0..24).map(f64::from).collect();
        let a = t.constant(Tensor::new(vec![2, 3, 4], data.clone()).unwrap());
        let p = t.permute(a, &[2, 0, 1]).unwrap();
        assert_eq!(t.shape(p), &[4, 2, 3]);
        // out[i][j][k] = a[j][k][i]
        assert_eq!(t.value(p).data()[1], data[4]);
        let back = t.permute(p, &[1, 2, 0]).unwrap();
        assert_eq!(t.value(back).data(), &data[..]);
    }
}
