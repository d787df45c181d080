//! The differentiation tape.

use std::sync::Arc;

use super::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale(f64),
    MatMul,
    Transpose,
    /// m x n -> 1 x n column sums.
    SumRows,
    /// 1 x n -> times x n tiling.
    RepeatRows,
    /// m x n -> m x 1 row sums.
    SumCols,
    /// m x 1 -> m x times tiling.
    RepeatCols,
    /// m x n -> 1 x 1 total.
    SumAll,
    /// 1 x 1 -> rows x cols fill.
    Spread,
    ConcatCols { widths: Vec<usize> },
    SliceCols { start: usize },
    /// Places a block into a wider zero matrix at column `start`.
    PadCols { start: usize },
    Sigmoid,
    Tanh,
    Sin,
    Cos,
    Exp,
    Ln,
    /// Column-wise max over `groups` equal row segments. `argmax` holds the
    /// absolute source row per (group, col), flattened row-major.
    MaxPoolRows { argmax: Arc<Vec<usize>> },
    /// Adjoint of max-pool: routes rows of a groups x n matrix to `argmax`
    /// positions inside a total_rows x n zero matrix.
    ScatterRows { argmax: Arc<Vec<usize>> },
    /// Adjoint of scatter: picks `argmax` entries back out.
    GatherRows { total_rows: usize, argmax: Arc<Vec<usize>> },
}

struct Node {
    op: Op,
    parents: Vec<usize>,
    value: Tensor,
    requires_grad: bool,
}

/// Tape of eagerly evaluated tensor operations.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops all nodes but keeps the allocation.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Differentiable input (parameters, diffusion states).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, vec![], value, true)
    }

    /// Non-differentiable input (data, per-row weights, frozen features).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, vec![], value, false)
    }

    fn push(&mut self, op: Op, parents: Vec<usize>, value: Tensor, rg: bool) -> Var {
        self.nodes.push(Node { op, parents, value, requires_grad: rg });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, op: Op, a: Var, value: Tensor) -> Var {
        let rg = self.nodes[a.0].requires_grad;
        self.push(op, vec![a.0], value, rg)
    }

    fn binary(&mut self, op: Op, a: Var, b: Var, value: Tensor) -> Var {
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(op, vec![a.0, b.0], value, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).add(self.value(b));
        self.binary(Op::Add, a, b, v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).sub(self.value(b));
        self.binary(Op::Sub, a, b, v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).mul(self.value(b));
        self.binary(Op::Mul, a, b, v)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x / y);
        self.binary(Op::Div, a, b, v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).scale(-1.0);
        self.unary(Op::Neg, a, v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).scale(c);
        self.unary(Op::Scale(c), a, v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.binary(Op::MatMul, a, b, v)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.unary(Op::Transpose, a, v)
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = Tensor::zeros(1, t.cols);
        for r in 0..t.rows {
            for c in 0..t.cols {
                out.data[c] += t.get(r, c);
            }
        }
        self.unary(Op::SumRows, a, out)
    }

    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.rows, 1, "repeat_rows wants a row vector");
        let mut data = Vec::with_capacity(times * t.cols);
        for _ in 0..times {
            data.extend_from_slice(&t.data);
        }
        let v = Tensor::from_vec(times, t.cols, data);
        self.unary(Op::RepeatRows, a, v)
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let mut out = Tensor::zeros(t.rows, 1);
        for r in 0..t.rows {
            out.data[r] = t.row(r).iter().sum();
        }
        self.unary(Op::SumCols, a, out)
    }

    pub fn repeat_cols(&mut self, a: Var, times: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.cols, 1, "repeat_cols wants a column vector");
        let mut out = Tensor::zeros(t.rows, times);
        for r in 0..t.rows {
            let x = t.data[r];
            for c in 0..times {
                out.set(r, c, x);
            }
        }
        self.unary(Op::RepeatCols, a, out)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum_all());
        self.unary(Op::SumAll, a, v)
    }

    pub fn spread(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.shape(), (1, 1), "spread wants a scalar");
        let v = Tensor::filled(rows, cols, t.data[0]);
        self.unary(Op::Spread, a, v)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows;
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols).collect();
        let total: usize = widths.iter().sum();
        let mut out = Tensor::zeros(rows, total);
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let t = self.value(p);
            assert_eq!(t.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.data[r * total + offset..r * total + offset + w]
                    .copy_from_slice(t.row(r));
            }
            offset += w;
        }
        let rg = parts.iter().any(|&p| self.nodes[p.0].requires_grad);
        self.push(Op::ConcatCols { widths }, parts.iter().map(|p| p.0).collect(), out, rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        assert!(start + len <= t.cols, "slice out of bounds");
        let mut out = Tensor::zeros(t.rows, len);
        for r in 0..t.rows {
            out.data[r * len..(r + 1) * len]
                .copy_from_slice(&t.row(r)[start..start + len]);
        }
        self.unary(Op::SliceCols { start }, a, out)
    }

    pub fn pad_cols(&mut self, a: Var, start: usize, total: usize) -> Var {
        let t = self.value(a);
        assert!(start + t.cols <= total, "pad out of bounds");
        let w = t.cols;
        let mut out = Tensor::zeros(t.rows, total);
        for r in 0..t.rows {
            out.data[r * total + start..r * total + start + w].copy_from_slice(t.row(r));
        }
        self.unary(Op::PadCols { start }, a, out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.unary(Op::Sigmoid, a, v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.unary(Op::Tanh, a, v)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::sin);
        self.unary(Op::Sin, a, v)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::cos);
        self.unary(Op::Cos, a, v)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.unary(Op::Exp, a, v)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.unary(Op::Ln, a, v)
    }

    /// `x * sigmoid(x)`, composed so both backward passes stay exact.
    pub fn silu(&mut self, a: Var) -> Var {
        let s = self.sigmoid(a);
        self.mul(a, s)
    }

    /// Column-wise max over `groups` equal segments of rows.
    ///
    /// The winning row indices are frozen into the node, so the gradient is
    /// the exact subgradient at the forward point.
    pub fn max_pool_rows(&mut self, a: Var, groups: usize) -> Var {
        let t = self.value(a);
        assert!(groups > 0 && t.rows % groups == 0, "rows must split evenly");
        let seg = t.rows / groups;
        let n = t.cols;
        let mut out = Tensor::zeros(groups, n);
        let mut argmax = vec![0usize; groups * n];
        for g in 0..groups {
            let base = g * seg;
            for c in 0..n {
                let mut best = t.get(base, c);
                let mut best_r = base;
                for r in base + 1..base + seg {
                    let x = t.get(r, c);
                    if x > best {
                        best = x;
                        best_r = r;
                    }
                }
                out.set(g, c, best);
                argmax[g * n + c] = best_r;
            }
        }
        self.unary(Op::MaxPoolRows { argmax: Arc::new(argmax) }, a, out)
    }

    fn scatter_rows(&mut self, a: Var, total_rows: usize, argmax: Arc<Vec<usize>>) -> Var {
        let t = self.value(a);
        let n = t.cols;
        assert_eq!(argmax.len(), t.rows * n);
        let mut out = Tensor::zeros(total_rows, n);
        for g in 0..t.rows {
            for c in 0..n {
                out.data[argmax[g * n + c] * n + c] += t.get(g, c);
            }
        }
        self.unary(Op::ScatterRows { argmax }, a, out)
    }

    fn gather_rows(&mut self, a: Var, groups: usize, argmax: Arc<Vec<usize>>) -> Var {
        let t = self.value(a);
        let n = t.cols;
        assert_eq!(argmax.len(), groups * n);
        let total_rows = t.rows;
        let mut out = Tensor::zeros(groups, n);
        for g in 0..groups {
            for c in 0..n {
                out.set(g, c, t.data[argmax[g * n + c] * n + c]);
            }
        }
        self.unary(Op::GatherRows { total_rows, argmax }, a, out)
    }

    /// Fully-connected layer helper: `silu_or_id(x W + b)` for row-batched x.
    pub fn linear(&mut self, x: Var, w: Var, b: Var, activate: bool) -> Var {
        let xw = self.matmul(x, w);
        let rows = self.value(xw).rows;
        let bias = self.repeat_rows(b, rows);
        let z = self.add(xw, bias);
        if activate {
            self.silu(z)
        } else {
            z
        }
    }

    /// Reverse-mode sweep from a scalar `output`.
    ///
    /// Returns one gradient per entry of `wrt` (`None` when no path connects
    /// it to the output). The adjoints are ordinary graph nodes, so any
    /// scalar built from them can be differentiated again.
    pub fn backward(&mut self, output: Var, wrt: &[Var]) -> Vec<Option<Var>> {
        assert_eq!(self.value(output).shape(), (1, 1), "backward wants a scalar");
        let seed = self.constant(Tensor::scalar(1.0));
        self.backward_seeded(output, seed, wrt)
    }

    /// Reverse-mode sweep with an explicit adjoint seed of the output shape.
    pub fn backward_seeded(&mut self, output: Var, seed: Var, wrt: &[Var]) -> Vec<Option<Var>> {
        assert_eq!(
            self.value(output).shape(),
            self.value(seed).shape(),
            "seed shape must match output"
        );
        let upper = output.0 + 1;
        // Restrict the sweep to ancestors of the output that require grad.
        let mut active = vec![false; upper];
        if self.nodes[output.0].requires_grad {
            let mut stack = vec![output.0];
            active[output.0] = true;
            while let Some(id) = stack.pop() {
                for &p in &self.nodes[id].parents {
                    if !active[p] && self.nodes[p].requires_grad {
                        active[p] = true;
                        stack.push(p);
                    }
                }
            }
        }
        let mut adjoint: Vec<Option<Var>> = vec![None; upper];
        if active[output.0] {
            adjoint[output.0] = Some(seed);
        }
        for id in (0..upper).rev() {
            if !active[id] {
                continue;
            }
            let Some(d) = adjoint[id] else { continue };
            for (parent, grad) in self.vjp(id, d) {
                if !self.nodes[parent].requires_grad {
                    continue;
                }
                adjoint[parent] = Some(match adjoint[parent] {
                    Some(acc) => self.add(acc, grad),
                    None => grad,
                });
            }
        }
        wrt.iter().map(|v| adjoint.get(v.0).copied().flatten()).collect()
    }

    /// Vector-Jacobian product of node `id` given output adjoint `d`,
    /// expressed with graph ops so the result stays differentiable.
    fn vjp(&mut self, id: usize, d: Var) -> Vec<(usize, Var)> {
        let op = self.nodes[id].op.clone();
        let parents = self.nodes[id].parents.clone();
        let y = Var(id);
        match op {
            Op::Leaf => vec![],
            Op::Add => vec![(parents[0], d), (parents[1], d)],
            Op::Sub => {
                let nd = self.neg(d);
                vec![(parents[0], d), (parents[1], nd)]
            }
            Op::Mul => {
                let (a, b) = (Var(parents[0]), Var(parents[1]));
                let ga = self.mul(d, b);
                let gb = self.mul(d, a);
                vec![(parents[0], ga), (parents[1], gb)]
            }
            Op::Div => {
                let b = Var(parents[1]);
                let ga = self.div(d, b);
                let y_over_b = self.div(y, b);
                let prod = self.mul(d, y_over_b);
                let gb = self.neg(prod);
                vec![(parents[0], ga), (parents[1], gb)]
            }
            Op::Neg => {
                let g = self.neg(d);
                vec![(parents[0], g)]
            }
            Op::Scale(c) => {
                let g = self.scale(d, c);
                vec![(parents[0], g)]
            }
            Op::MatMul => {
                let (a, b) = (Var(parents[0]), Var(parents[1]));
                let bt = self.transpose(b);
                let ga = self.matmul(d, bt);
                let at = self.transpose(a);
                let gb = self.matmul(at, d);
                vec![(parents[0], ga), (parents[1], gb)]
            }
            Op::Transpose => {
                let g = self.transpose(d);
                vec![(parents[0], g)]
            }
            Op::SumRows => {
                let rows = self.nodes[parents[0]].value.rows;
                let g = self.repeat_rows(d, rows);
                vec![(parents[0], g)]
            }
            Op::RepeatRows => {
                let g = self.sum_rows(d);
                vec![(parents[0], g)]
            }
            Op::SumCols => {
                let cols = self.nodes[parents[0]].value.cols;
                let g = self.repeat_cols(d, cols);
                vec![(parents[0], g)]
            }
            Op::RepeatCols => {
                let g = self.sum_cols(d);
                vec![(parents[0], g)]
            }
            Op::SumAll => {
                let (rows, cols) = self.nodes[parents[0]].value.shape();
                let g = self.spread(d, rows, cols);
                vec![(parents[0], g)]
            }
            Op::Spread => {
                let g = self.sum_all(d);
                vec![(parents[0], g)]
            }
            Op::ConcatCols { widths } => {
                let mut grads = Vec::with_capacity(parents.len());
                let mut offset = 0;
                for (&p, &w) in parents.iter().zip(&widths) {
                    let g = self.slice_cols(d, offset, w);
                    grads.push((p, g));
                    offset += w;
                }
                grads
            }
            Op::SliceCols { start } => {
                let total = self.nodes[parents[0]].value.cols;
                let g = self.pad_cols(d, start, total);
                vec![(parents[0], g)]
            }
            Op::PadCols { start, .. } => {
                let len = self.nodes[parents[0]].value.cols;
                let g = self.slice_cols(d, start, len);
                vec![(parents[0], g)]
            }
            Op::Sigmoid => {
                // y' = y (1 - y) = y - y^2
                let yy = self.mul(y, y);
                let deriv = self.sub(y, yy);
                let g = self.mul(d, deriv);
                vec![(parents[0], g)]
            }
            Op::Tanh => {
                let yy = self.mul(y, y);
                let (rows, cols) = self.value(y).shape();
                let one = self.constant(Tensor::filled(rows, cols, 1.0));
                let deriv = self.sub(one, yy);
                let g = self.mul(d, deriv);
                vec![(parents[0], g)]
            }
            Op::Sin => {
                let a = Var(parents[0]);
                let ca = self.cos(a);
                let g = self.mul(d, ca);
                vec![(parents[0], g)]
            }
            Op::Cos => {
                let a = Var(parents[0]);
                let sa = self.sin(a);
                let prod = self.mul(d, sa);
                let g = self.neg(prod);
                vec![(parents[0], g)]
            }
            Op::Exp => {
                let g = self.mul(d, y);
                vec![(parents[0], g)]
            }
            Op::Ln => {
                let a = Var(parents[0]);
                let g = self.div(d, a);
                vec![(parents[0], g)]
            }
            Op::MaxPoolRows { argmax, .. } => {
                let total_rows = self.nodes[parents[0]].value.rows;
                let g = self.scatter_rows(d, total_rows, argmax);
                vec![(parents[0], g)]
            }
            Op::ScatterRows { argmax } => {
                let groups = argmax.len() / self.value(d).cols;
                let g = self.gather_rows(d, groups, argmax);
                vec![(parents[0], g)]
            }
            Op::GatherRows { argmax, total_rows } => {
                let g = self.scatter_rows(d, total_rows, argmax);
                vec![(parents[0], g)]
            }
        }
    }
}
