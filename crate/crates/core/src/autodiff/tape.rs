//! Reverse-mode differentiation over a Wengert list.
//!
//! Every operation appends one node holding its forward value. Node indices
//! are handed out in creation order, so the list is already topologically
//! sorted and the reverse pass is a single backwards sweep.

use super::tensor::{canonical_sum, matmul_nn, matmul_nt, matmul_tn_acc, Tensor};
use crate::error::{invalid, shape_err, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Minimum(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    SegmentMean(Var, usize),
    LogSumExpRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records primitive operations and replays them in reverse.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every parameter leaf.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` when it is not a parameter or does not
    /// influence the loss.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    /// Gradients for `vars` in order, with zeros for parameters the loss does
    /// not depend on.
    pub fn collect(&self, tape: &Tape, vars: &[Var]) -> Vec<Tensor> {
        vars.iter()
            .map(|&v| {
                self.get(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros_like(tape.value(v)))
            })
            .collect()
    }
}

fn broadcast_dims(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| -> Option<usize> {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => shape_err(op, format!("cannot broadcast {a:?} with {b:?}")),
    }
}

#[inline]
fn bidx(dims: (usize, usize), i: usize, j: usize) -> usize {
    let ii = if dims.0 == 1 { 0 } else { i };
    let jj = if dims.1 == 1 { 0 } else { j };
    ii * dims.1 + jj
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    /// A leaf whose gradient is reported by [`Tape::backward`].
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Param)
    }

    pub fn params(&mut self, ts: &[&Tensor]) -> Vec<Var> {
        ts.iter().map(|t| self.param((*t).clone())).collect()
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, k) = self.dims(a);
        let (k2, c) = self.dims(b);
        if k != k2 {
            return shape_err("matmul", format!("[{r}x{k}] · [{k2}x{c}]"));
        }
        let mut out = vec![0.0; r * c];
        matmul_nn(self.value(a).data(), self.value(b).data(), r, k, c, &mut out);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`, the layout used by dense layers with `out x in` weights.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, k) = self.dims(a);
        let (c, k2) = self.dims(b);
        if k != k2 {
            return shape_err("matmul_nt", format!("[{r}x{k}] · [{c}x{k2}]ᵀ"));
        }
        let mut out = vec![0.0; r * c];
        matmul_nt(self.value(a).data(), self.value(b).data(), r, k, c, &mut out);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::MatMulNt(a, b)))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let da = self.dims(a);
        let db = self.dims(b);
        let (r, c) = broadcast_dims(name, da, db)?;
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = Vec::with_capacity(r * c);
        if da == db {
            out.extend(av.iter().zip(bv).map(|(&x, &y)| f(x, y)));
        } else {
            for i in 0..r {
                for j in 0..c {
                    out.push(f(av[bidx(da, i, j)], bv[bidx(db, i, j)]));
                }
            }
        }
        Ok(self.push(Tensor::matrix(r, c, out)?, op))
    }

    /// Elementwise sum; either side may broadcast along a unit dimension.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("minimum", a, b, |x, y| if x <= y { x } else { y }, Op::Minimum(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a).map(f);
        self.push(t, op)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| x * k, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, |x| x + k, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    /// ReLU with subgradient 0 at the kink.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    /// Clamp into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s: f64 = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Sum across columns: `[r x c] -> [r x 1]`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (r, _) = t.dims();
        let out: Vec<f64> = (0..r).map(|i| t.row_slice(i).iter().sum()).collect();
        let out = Tensor::matrix(r, 1, out).expect("row_sum shape");
        self.push(out, Op::RowSum(a))
    }

    /// Mean over consecutive groups of `group` rows: `[g*n x c] -> [n x c]`.
    ///
    /// Each column of each group is summed in ascending value order, so the
    /// result is bit-identical under any permutation of rows within a group.
    pub fn segment_mean(&mut self, a: Var, group: usize) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = t.dims();
        if group == 0 || r % group != 0 {
            return shape_err("segment_mean", format!("{r} rows not divisible into groups of {group}"));
        }
        let n = r / group;
        let mut out = vec![0.0; n * c];
        let mut scratch = vec![0.0; group];
        let data = t.data();
        for g in 0..n {
            for j in 0..c {
                for (q, s) in scratch.iter_mut().enumerate() {
                    *s = data[(g * group + q) * c + j];
                }
                out[g * c + j] = canonical_sum(&mut scratch) / group as f64;
            }
        }
        Ok(self.push(Tensor::matrix(n, c, out)?, Op::SegmentMean(a, group)))
    }

    /// Mean over all rows: `[r x c] -> [1 x c]`, canonical summation order.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let r = self.dims(a).0;
        self.segment_mean(a, r)
    }

    /// Stable `log Σ_j exp(a[i, j])` per row: `[r x c] -> [r x 1]`.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (r, _) = t.dims();
        let out: Vec<f64> = (0..r)
            .map(|i| {
                let row = t.row_slice(i);
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
            })
            .collect();
        let out = Tensor::matrix(r, 1, out).expect("logsumexp shape");
        self.push(out, Op::LogSumExpRows(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return invalid("concat_cols of nothing");
        };
        let r = self.dims(first).0;
        let mut total = 0;
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pr != r {
                return shape_err("concat_cols", format!("row count {pr} != {r}"));
            }
            total += pc;
        }
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        Ok(self.push(Tensor::matrix(r, total, out)?, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return invalid("concat_rows of nothing");
        };
        let c = self.dims(first).1;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (pr, pc) = self.dims(p);
            if pc != c {
                return shape_err("concat_rows", format!("column count {pc} != {c}"));
            }
            out.extend_from_slice(self.value(p).data());
            rows += pr;
        }
        Ok(self.push(Tensor::matrix(rows, c, out)?, Op::ConcatRows(parts.to_vec())))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if start >= end || end > c {
            return shape_err("slice_cols", format!("range {start}..{end} of {c} columns"));
        }
        let t = self.value(a);
        let mut out = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            out.extend_from_slice(&t.row_slice(i)[start..end]);
        }
        Ok(self.push(Tensor::matrix(r, end - start, out)?, Op::SliceCols(a, start, end)))
    }

    /// Row selection with repetition allowed; backward scatter-adds.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(a);
        if idx.is_empty() {
            return invalid("gather_rows with no indices");
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return shape_err("gather_rows", format!("row {bad} out of {r}"));
        }
        let t = self.value(a);
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(t.row_slice(i));
        }
        Ok(self.push(Tensor::matrix(idx.len(), c, out)?, Op::GatherRows(a, idx.to_vec())))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return shape_err(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.value(loss).shape()),
            );
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let out = &node.value;
            match &node.op {
                Op::Constant => {}
                Op::Param => {
                    grads[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (r, k) = self.dims(*a);
                    let c = self.dims(*b).1;
                    let mut ga = vec![0.0; r * k];
                    matmul_nt(&g, self.value(*b).data(), r, c, k, &mut ga);
                    accumulate(&mut grads, *a, ga);
                    let mut gb = vec![0.0; k * c];
                    matmul_tn_acc(self.value(*a).data(), &g, r, k, c, &mut gb);
                    accumulate(&mut grads, *b, gb);
                }
                Op::MatMulNt(a, b) => {
                    let (r, k) = self.dims(*a);
                    let c = self.dims(*b).0;
                    let mut ga = vec![0.0; r * k];
                    matmul_nn(&g, self.value(*b).data(), r, c, k, &mut ga);
                    accumulate(&mut grads, *a, ga);
                    // gb[c, k] = gᵀ[c, r] · a[r, k]
                    let mut gb = vec![0.0; c * k];
                    matmul_tn_acc(&g, self.value(*a).data(), r, c, k, &mut gb);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    let od = out.dims();
                    let ga = reduce_to(&g, od, self.dims(*a));
                    let gb = reduce_to(&g, od, self.dims(*b));
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Sub(a, b) => {
                    let od = out.dims();
                    let ga = reduce_to(&g, od, self.dims(*a));
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    let gb = reduce_to(&neg, od, self.dims(*b));
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Mul(a, b) => {
                    let od = out.dims();
                    let (da, db) = (self.dims(*a), self.dims(*b));
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let mut ta = vec![0.0; od.0 * od.1];
                    let mut tb = vec![0.0; od.0 * od.1];
                    for i in 0..od.0 {
                        for j in 0..od.1 {
                            let o = i * od.1 + j;
                            ta[o] = g[o] * bv[bidx(db, i, j)];
                            tb[o] = g[o] * av[bidx(da, i, j)];
                        }
                    }
                    accumulate(&mut grads, *a, reduce_to(&ta, od, da));
                    accumulate(&mut grads, *b, reduce_to(&tb, od, db));
                }
                Op::Minimum(a, b) => {
                    let od = out.dims();
                    let (da, db) = (self.dims(*a), self.dims(*b));
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let mut ta = vec![0.0; od.0 * od.1];
                    let mut tb = vec![0.0; od.0 * od.1];
                    for i in 0..od.0 {
                        for j in 0..od.1 {
                            let o = i * od.1 + j;
                            if av[bidx(da, i, j)] <= bv[bidx(db, i, j)] {
                                ta[o] = g[o];
                            } else {
                                tb[o] = g[o];
                            }
                        }
                    }
                    accumulate(&mut grads, *a, reduce_to(&ta, od, da));
                    accumulate(&mut grads, *b, reduce_to(&tb, od, db));
                }
                Op::Scale(a, k) => {
                    accumulate(&mut grads, *a, g.iter().map(|v| v * k).collect());
                }
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Tanh(a) => {
                    let ga = g
                        .iter()
                        .zip(out.data())
                        .map(|(gv, y)| gv * (1.0 - y * y))
                        .collect();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(gv, &x)| if x > 0.0 { *gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.iter().zip(out.data()).map(|(gv, y)| gv * y).collect();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let ga = g
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(gv, x)| gv / x)
                        .collect();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = g
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(gv, x)| 2.0 * x * gv)
                        .collect();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let ga = g
                        .iter()
                        .zip(self.value(*a).data())
                        .map(|(gv, &x)| if x >= *lo && x <= *hi { *gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    accumulate(&mut grads, *a, vec![g[0]; n]);
                }
                Op::Mean(a) => {
                    let n = self.value(*a).len();
                    accumulate(&mut grads, *a, vec![g[0] / n as f64; n]);
                }
                Op::RowSum(a) => {
                    let (r, c) = self.dims(*a);
                    let mut ga = Vec::with_capacity(r * c);
                    for gi in g.iter().take(r) {
                        ga.extend(std::iter::repeat_n(*gi, c));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::SegmentMean(a, group) => {
                    let (r, c) = self.dims(*a);
                    let inv = 1.0 / *group as f64;
                    let mut ga = vec![0.0; r * c];
                    for i in 0..r {
                        let gi = i / group;
                        for j in 0..c {
                            ga[i * c + j] = g[gi * c + j] * inv;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::LogSumExpRows(a) => {
                    let t = self.value(*a);
                    let (r, c) = t.dims();
                    let mut ga = vec![0.0; r * c];
                    for i in 0..r {
                        let lse = out.data()[i];
                        for j in 0..c {
                            ga[i * c + j] = g[i] * (t.get(i, j) - lse).exp();
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let (r, total) = out.dims();
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.dims(p).1;
                        let mut gp = Vec::with_capacity(r * pc);
                        for i in 0..r {
                            gp.extend_from_slice(&g[i * total + offset..i * total + offset + pc]);
                        }
                        accumulate(&mut grads, p, gp);
                        offset += pc;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        accumulate(&mut grads, p, g[offset..offset + n].to_vec());
                        offset += n;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let (r, c) = self.dims(*a);
                    let w = end - start;
                    let mut ga = vec![0.0; r * c];
                    for i in 0..r {
                        ga[i * c + start..i * c + end].copy_from_slice(&g[i * w..(i + 1) * w]);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let (r, c) = self.dims(*a);
                    let mut ga = vec![0.0; r * c];
                    for (k, &i) in idx.iter().enumerate() {
                        for j in 0..c {
                            ga[i * c + j] += g[k * c + j];
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
            }
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| match (&self.nodes[i].op, g) {
                (Op::Param, Some(g)) => {
                    let shape = self.nodes[i].value.shape().to_vec();
                    Some(Tensor::new(shape, g).expect("gradient shape"))
                }
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
    match &mut grads[v.0] {
        Some(acc) => {
            for (a, b) in acc.iter_mut().zip(&g) {
                *a += b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

/// Sum a gradient of shape `from` down to a broadcast operand of shape `to`.
fn reduce_to(g: &[f64], from: (usize, usize), to: (usize, usize)) -> Vec<f64> {
    if from == to {
        return g.to_vec();
    }
    let mut out = vec![0.0; to.0 * to.1];
    for i in 0..from.0 {
        for j in 0..from.1 {
            out[bidx(to, i, j)] += g[i * from.1 + j];
        }
    }
    out
}
