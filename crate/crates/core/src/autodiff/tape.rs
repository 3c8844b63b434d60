use std::sync::Arc;

use super::{ParamId, ParamStore, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Affine(Var, T),
    RowAffine(Var, Arc<[T]>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Gather(Var, Arc<[usize]>),
    SegmentSum(Var, Arc<[usize]>),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Clamp(Var, T, T),
    L2Normalize(Var, T),
    Softmax(Var),
    CrossEntropy(Var, Arc<[usize]>, Arc<[T]>),
    Bce(Var, Arc<[T]>, Arc<[T]>),
    Mse(Var, Arc<[T]>),
    Sum(Var),
    Mean(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a forward computation for one reverse sweep.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Tape::new()
    }
}

fn shape_err<T>(op: &'static str, detail: String) -> Result<T> {
    Err(Error::Shape { op, detail })
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// An input whose gradient is wanted (used by gradient checks).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Bind a stored parameter. Bind each parameter once per tape.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: store.value(id).clone(),
            op: Op::Param(id),
            requires_grad: store.is_trainable(id),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        let t = &self.nodes[v.0].value;
        [t.rows(), t.cols()]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return shape_err("matmul", format!("{:?} x {:?}", x.shape(), y.shape()));
        }
        let out = x.matmul(y)?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (x, y) = (self.value(a), self.value(b));
        if !x.same_shape(y) {
            return shape_err(name, format!("{:?} vs {:?}", x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::from_vec(x.rows(), x.cols(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "add", |p, q| p + q)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "sub", |p, q| p - q)?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "mul", |p, q| p * q)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// Add a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return shape_err("add_row", format!("{:?} + {:?}", x.shape(), r.shape()));
        }
        let mut out = x.clone();
        let c = x.cols();
        if c > 0 {
            for chunk in out.data_mut().chunks_exact_mut(c) {
                for (v, &b) in chunk.iter_mut().zip(r.data()) {
                    *v += b;
                }
            }
        }
        Ok(self.push(out, Op::AddRow(a, row), &[a, row]))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Var {
        let out = self.value(a).map(|x| scale * x + shift);
        self.push(out, Op::Affine(a, scale), &[a])
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.affine(a, s, T::zero())
    }

    /// Per-row `mul[i] * a[i, :] + add[i]` with constant coefficients.
    pub fn row_affine(&mut self, a: Var, mul: Arc<[T]>, add: Arc<[T]>) -> Result<Var> {
        let x = self.value(a);
        if mul.len() != x.rows() || add.len() != x.rows() {
            return shape_err(
                "row_affine",
                format!("{} rows, {}/{} coefficients", x.rows(), mul.len(), add.len()),
            );
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            let (m, s) = (mul[r], add[r]);
            out.row_mut(r).iter_mut().for_each(|v| *v = m * *v + s);
        }
        Ok(self.push(out, Op::RowAffine(a, mul), &[a]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat_cols", "no inputs".into());
        };
        let rows = self.value(first).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return shape_err("concat_cols", "row counts differ".into());
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let x = self.value(p);
            let w = x.cols();
            for r in 0..rows {
                out.row_mut(r)[off..off + w].copy_from_slice(x.row(r));
            }
            off += w;
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return shape_err("concat_rows", "no inputs".into());
        };
        let cols = self.value(first).cols();
        if parts.iter().any(|&p| self.value(p).cols() != cols) {
            return shape_err("concat_rows", "column counts differ".into());
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rows = data.len() / cols.max(1);
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Columns `start..start + width`.
    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let x = self.value(a);
        if start + width > x.cols() {
            return shape_err("slice_cols", format!("{start}+{width} > {}", x.cols()));
        }
        let mut out = Tensor::zeros(x.rows(), width);
        for r in 0..x.rows() {
            out.row_mut(r).copy_from_slice(&x.row(r)[start..start + width]);
        }
        Ok(self.push(out, Op::SliceCols(a, start), &[a]))
    }

    /// Row `idx[e]` of `a` for each output row `e` (node values to edges).
    pub fn gather(&mut self, a: Var, idx: Arc<[usize]>) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= x.rows()) {
            return shape_err("gather", format!("row {bad} of {}", x.rows()));
        }
        let out = x.select_rows(&idx);
        Ok(self.push(out, Op::Gather(a, idx), &[a]))
    }

    /// Sum row `e` of `a` into output row `seg[e]` (edge values to nodes).
    pub fn segment_sum(&mut self, a: Var, seg: Arc<[usize]>, segments: usize) -> Result<Var> {
        let x = self.value(a);
        if seg.len() != x.rows() {
            return shape_err("segment_sum", format!("{} ids for {} rows", seg.len(), x.rows()));
        }
        if let Some(&bad) = seg.iter().find(|&&s| s >= segments) {
            return shape_err("segment_sum", format!("segment {bad} of {segments}"));
        }
        let mut out = Tensor::zeros(segments, x.cols());
        for (e, &s) in seg.iter().enumerate() {
            for (o, &v) in out.row_mut(s).iter_mut().zip(x.row(e)) {
                *o += v;
            }
        }
        Ok(self.push(out, Op::SegmentSum(a, seg), &[a]))
    }

    /// Per-segment mean; empty segments give zero rows.
    pub fn segment_mean(&mut self, a: Var, seg: Arc<[usize]>, segments: usize) -> Result<Var> {
        let mut counts = vec![0usize; segments];
        for &s in seg.iter() {
            if s < segments {
                counts[s] += 1;
            }
        }
        let sum = self.segment_sum(a, seg, segments)?;
        let inv: Arc<[T]> = counts
            .iter()
            .map(|&c| if c == 0 { T::zero() } else { T::one() / T::of(c as f64) })
            .collect();
        let zero: Arc<[T]> = vec![T::zero(); segments].into();
        self.row_affine(sum, inv, zero)
    }

    fn unary(&mut self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let out = self.value(a).map(f);
        self.push(out, op, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), |x| x.tanh_fast())
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(T::zero()))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), |x| x.exp())
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), |x| x.ln())
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: T, hi: T) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.max(lo).min(hi))
    }

    /// `x / (||x|| + eps)` per row.
    pub fn l2_normalize(&mut self, a: Var, eps: T) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        for (r, n) in x.row_norms().into_iter().enumerate() {
            let s = n + eps;
            out.row_mut(r).iter_mut().for_each(|v| *v = *v / s);
        }
        self.push(out, Op::L2Normalize(a, eps), &[a])
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            softmax_in_place(out.row_mut(r));
        }
        self.push(out, Op::Softmax(a), &[a])
    }

    /// `sum_i w[i] * (logsumexp(z_i) - z_i[t_i])` over rows of logits `z`.
    pub fn cross_entropy(&mut self, logits: Var, targets: Arc<[usize]>, weights: Arc<[T]>) -> Result<Var> {
        let z = self.value(logits);
        if targets.len() != z.rows() || weights.len() != z.rows() {
            return shape_err(
                "cross_entropy",
                format!(
                    "{} rows, {} targets, {} weights",
                    z.rows(),
                    targets.len(),
                    weights.len()
                ),
            );
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= z.cols()) {
            return shape_err("cross_entropy", format!("class {bad} of {}", z.cols()));
        }
        let mut total = T::zero();
        for r in 0..z.rows() {
            let row = z.row(r);
            total += weights[r] * (log_sum_exp(row) - row[targets[r]]);
        }
        Ok(self.push(
            Tensor::scalar(total),
            Op::CrossEntropy(logits, targets, weights),
            &[logits],
        ))
    }

    /// Mean-reduced cross-entropy.
    pub fn cross_entropy_mean(&mut self, logits: Var, targets: Arc<[usize]>) -> Result<Var> {
        let n = self.value(logits).rows().max(1);
        let w: Arc<[T]> = vec![T::one() / T::of(n as f64); targets.len()].into();
        self.cross_entropy(logits, targets, w)
    }

    /// `-sum_i w[i] (y log p + (1 - y) log(1 - p))` on probabilities `p`
    /// (a column or any shape with one entry per label). Terms with a zero
    /// coefficient are skipped, so `p == y` gives exactly zero.
    pub fn bce(&mut self, probs: Var, labels: Arc<[T]>, weights: Arc<[T]>) -> Result<Var> {
        let p = self.value(probs);
        if labels.len() != p.len() || weights.len() != p.len() {
            return shape_err("bce", format!("{} probs, {} labels", p.len(), labels.len()));
        }
        let eps = bce_eps::<T>();
        let mut total = T::zero();
        for ((&pi, &y), &w) in p.data().iter().zip(labels.iter()).zip(weights.iter()) {
            if y != T::zero() {
                total -= w * y * pi.max(eps).ln();
            }
            if y != T::one() {
                total -= w * (T::one() - y) * (T::one() - pi).max(eps).ln();
            }
        }
        Ok(self.push(Tensor::scalar(total), Op::Bce(probs, labels, weights), &[probs]))
    }

    /// Mean squared error against a constant target of the same size.
    pub fn mse(&mut self, a: Var, target: Arc<[T]>) -> Result<Var> {
        let x = self.value(a);
        if target.len() != x.len() {
            return shape_err("mse", format!("{} values, {} targets", x.len(), target.len()));
        }
        let n = T::of(x.len().max(1) as f64);
        let total: T = x
            .data()
            .iter()
            .zip(target.iter())
            .map(|(&v, &t)| (v - t) * (v - t))
            .sum();
        Ok(self.push(Tensor::scalar(total / n), Op::Mse(a, target), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let s: T = x.data().iter().copied().sum::<T>() / T::of(x.len().max(1) as f64);
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Reverse sweep from a scalar node.
    pub fn gradients(&self, loss: Var) -> Result<Gradients<T>> {
        self.sweep(loss, |_| true)
    }

    /// Reverse sweep that only retains gradients of nodes where `keep` holds.
    fn sweep(&self, loss: Var, keep: impl Fn(&Node<T>) -> bool) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return shape_err("gradients", format!("loss has shape {:?}", self.value(loss).shape()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if self.nodes[i].requires_grad {
                self.backward_node(i, &g, &mut grads);
            }
            if keep(&self.nodes[i]) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    /// Reverse sweep, accumulating parameter gradients into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<()> {
        let g = self.sweep(loss, |n| matches!(n.op, Op::Param(_)))?;
        for (i, node) in self.nodes.iter().enumerate().take(g.grads.len()) {
            if let (Op::Param(id), Some(grad)) = (&node.op, &g.grads[i]) {
                if node.requires_grad {
                    store.accumulate_grad(*id, grad);
                }
            }
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let out = &self.nodes[i].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        let acc = |v: Var, t: Tensor<T>, grads: &mut [Option<Tensor<T>>]| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        match &self.nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (m, k, n) = (x.rows(), x.cols(), y.cols());
                if needs(*a) {
                    // dA = G B^T
                    let mut ga = Tensor::zeros(m, k);
                    T::gemm(
                        m,
                        n,
                        k,
                        T::one(),
                        g.data(),
                        n as isize,
                        1,
                        y.data(),
                        1,
                        n as isize,
                        T::zero(),
                        ga.data_mut(),
                        k as isize,
                        1,
                    );
                    acc(*a, ga, grads);
                }
                if needs(*b) {
                    // dB = A^T G
                    let mut gb = Tensor::zeros(k, n);
                    T::gemm(
                        k,
                        m,
                        n,
                        T::one(),
                        x.data(),
                        1,
                        k as isize,
                        g.data(),
                        n as isize,
                        1,
                        T::zero(),
                        gb.data_mut(),
                        n as isize,
                        1,
                    );
                    acc(*b, gb, grads);
                }
            }
            Op::Add(a, b) => {
                if needs(*a) {
                    acc(*a, g.clone(), grads);
                }
                if needs(*b) {
                    acc(*b, g.clone(), grads);
                }
            }
            Op::Sub(a, b) => {
                if needs(*a) {
                    acc(*a, g.clone(), grads);
                }
                if needs(*b) {
                    acc(*b, g.map(|v| -v), grads);
                }
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                if needs(*a) {
                    acc(*a, elementwise(g, y, |p, q| p * q), grads);
                }
                if needs(*b) {
                    acc(*b, elementwise(g, x, |p, q| p * q), grads);
                }
            }
            Op::AddRow(a, row) => {
                if needs(*a) {
                    acc(*a, g.clone(), grads);
                }
                if needs(*row) {
                    let mut gr = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in gr.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(*row, gr, grads);
                }
            }
            Op::Affine(a, s) => acc(*a, g.map(|v| v * *s), grads),
            Op::RowAffine(a, mul) => {
                let mut ga = g.clone();
                for r in 0..ga.rows() {
                    let m = mul[r];
                    ga.row_mut(r).iter_mut().for_each(|v| *v *= m);
                }
                acc(*a, ga, grads);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if needs(p) {
                        let mut gp = Tensor::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        acc(p, gp, grads);
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let x = self.value(p);
                    let n = x.len();
                    if needs(p) {
                        let gp = Tensor::from_vec(x.rows(), x.cols(), g.data()[off..off + n].to_vec())
                            .expect("shape recorded on the forward pass");
                        acc(p, gp, grads);
                    }
                    off += n;
                }
            }
            Op::SliceCols(a, start) => {
                let x = self.value(*a);
                let mut ga = Tensor::zeros(x.rows(), x.cols());
                let w = g.cols();
                for r in 0..g.rows() {
                    ga.row_mut(r)[*start..*start + w].copy_from_slice(g.row(r));
                }
                acc(*a, ga, grads);
            }
            Op::Gather(a, idx) => {
                let x = self.value(*a);
                let mut ga = Tensor::zeros(x.rows(), x.cols());
                for (e, &src) in idx.iter().enumerate() {
                    for (o, &v) in ga.row_mut(src).iter_mut().zip(g.row(e)) {
                        *o += v;
                    }
                }
                acc(*a, ga, grads);
            }
            Op::SegmentSum(a, seg) => {
                let ga = g.select_rows(seg);
                acc(*a, ga, grads);
            }
            Op::Tanh(a) => acc(*a, elementwise(g, out, |gv, y| gv * (T::one() - y * y)), grads),
            Op::Sigmoid(a) => acc(*a, elementwise(g, out, |gv, y| gv * y * (T::one() - y)), grads),
            Op::Exp(a) => acc(*a, elementwise(g, out, |gv, y| gv * y), grads),
            Op::Relu(a) => {
                let x = self.value(*a);
                acc(
                    *a,
                    elementwise(g, x, |gv, v| if v > T::zero() { gv } else { T::zero() }),
                    grads,
                );
            }
            Op::Log(a) => {
                let x = self.value(*a);
                acc(*a, elementwise(g, x, |gv, v| gv / v), grads);
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                let (lo, hi) = (*lo, *hi);
                acc(
                    *a,
                    elementwise(g, x, |gv, v| if v < lo || v > hi { T::zero() } else { gv }),
                    grads,
                );
            }
            Op::L2Normalize(a, eps) => {
                let x = self.value(*a);
                let mut ga = Tensor::zeros(x.rows(), x.cols());
                for (r, n) in x.row_norms().into_iter().enumerate() {
                    let s = n + *eps;
                    let (xr, gr) = (x.row(r), g.row(r));
                    // d(x/s) = g/s - x (x.g) / (n s^2)
                    let dot: T = xr.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                    let coef = if n > T::zero() { dot / (n * s * s) } else { T::zero() };
                    for ((o, &xv), &gv) in ga.row_mut(r).iter_mut().zip(xr).zip(gr) {
                        *o = gv / s - xv * coef;
                    }
                }
                acc(*a, ga, grads);
            }
            Op::Softmax(a) => {
                let mut ga = Tensor::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let (y, gr) = (out.row(r), g.row(r));
                    let dot: T = y.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                    for ((o, &yv), &gv) in ga.row_mut(r).iter_mut().zip(y).zip(gr) {
                        *o = yv * (gv - dot);
                    }
                }
                acc(*a, ga, grads);
            }
            Op::CrossEntropy(logits, targets, weights) => {
                let gs = g.item();
                let z = self.value(*logits);
                let mut gz = z.clone();
                for r in 0..z.rows() {
                    let row = gz.row_mut(r);
                    softmax_in_place(row);
                    row[targets[r]] -= T::one();
                    let w = gs * weights[r];
                    row.iter_mut().for_each(|v| *v *= w);
                }
                acc(*logits, gz, grads);
            }
            Op::Bce(probs, labels, weights) => {
                let gs = g.item();
                let p = self.value(*probs);
                let eps = bce_eps::<T>();
                let mut gp = Tensor::zeros(p.rows(), p.cols());
                for (k, o) in gp.data_mut().iter_mut().enumerate() {
                    let pi = p.data()[k];
                    let (y, w) = (labels[k], weights[k]);
                    let mut d = T::zero();
                    if y != T::zero() {
                        d -= y / pi.max(eps);
                    }
                    if y != T::one() {
                        d += (T::one() - y) / (T::one() - pi).max(eps);
                    }
                    *o = gs * w * d;
                }
                acc(*probs, gp, grads);
            }
            Op::Mse(a, target) => {
                let x = self.value(*a);
                let c = T::of(2.0) * g.item() / T::of(x.len().max(1) as f64);
                let data = x.data().iter().zip(target.iter()).map(|(&v, &t)| c * (v - t)).collect();
                acc(
                    *a,
                    Tensor::from_vec(x.rows(), x.cols(), data).expect("same shape"),
                    grads,
                );
            }
            Op::Sum(a) => {
                let x = self.value(*a);
                acc(*a, Tensor::full(x.rows(), x.cols(), g.item()), grads);
            }
            Op::Mean(a) => {
                let x = self.value(*a);
                let v = g.item() / T::of(x.len().max(1) as f64);
                acc(*a, Tensor::full(x.rows(), x.cols(), v), grads);
            }
        }
    }
}

/// Result of a reverse sweep: the gradient of the loss at every node that
/// received one.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn elementwise<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&p, &q)| f(p, q)).collect();
    Tensor::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

fn bce_eps<T: Scalar>() -> T {
    T::of(1e-12).max(T::epsilon())
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln()
}

pub(crate) fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    row.iter_mut().for_each(|v| *v = *v / s);
}
