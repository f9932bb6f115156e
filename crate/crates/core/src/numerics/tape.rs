//! Reverse-mode automatic differentiation over a dynamically recorded tape.
//!
//! Every operation appends a node holding its output value. `backward`
//! walks the nodes in reverse and accumulates gradients into every node
//! that depends on a leaf created with `requires_grad`.

use crate::error::{Error, Result};
use crate::numerics::tensor::{gemm, softmax_slice, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const BATCH_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    BatchNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
        batch_stats: bool,
    },
    Gelu(Var),
    Relu(Var),
    ConcatRows(Var, Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    SelectRow(Var, usize),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Per-session operation record.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

/// Mean and variance observed by a training-mode batch norm.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

fn dim_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Dimension {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
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

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }

    fn mat(&self, v: Var) -> (usize, usize) {
        self.value(v).matrix_dims()
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape().len() != 2 || vb.shape().len() != 2 || va.shape()[1] != vb.shape()[0] {
            return Err(dim_err("matmul", va, vb));
        }
        let (m, k) = va.matrix_dims();
        let n = vb.shape()[1];
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, va.data(), false, vb.data(), false, &mut out, false);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg))
    }

    /// `a[m×k] · b[n×k]ᵀ`, the form of every `x·Wᵀ` linear map.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape().len() != 2 || vb.shape().len() != 2 || va.shape()[1] != vb.shape()[1] {
            return Err(dim_err("matmul_nt", va, vb));
        }
        let (m, k) = va.matrix_dims();
        let n = vb.shape()[0];
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, va.data(), false, vb.data(), true, &mut out, false);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMulNt(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(dim_err("add", va, vb));
        }
        let out: Vec<f64> = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let shape = va.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Add(a, b), rg))
    }

    /// Adds vector `b[n]` to every row of `a[m×n]`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (_, n) = va.matrix_dims();
        if va.shape().len() != 2 || vb.len() != n {
            return Err(dim_err("add_row", va, vb));
        }
        let bias = vb.data();
        let out: Vec<f64> = va
            .data()
            .chunks_exact(n)
            .flat_map(|row| row.iter().zip(bias).map(|(x, y)| x + y))
            .collect();
        let shape = va.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::AddRow(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(dim_err("mul", va, vb));
        }
        let out: Vec<f64> = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let shape = va.shape().to_vec();
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(shape, out)?, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let va = self.value(a);
        let out: Vec<f64> = va.data().iter().map(|x| x * c).collect();
        let t = Tensor::new(va.shape().to_vec(), out).expect("shape preserved");
        let rg = self.rg(a);
        self.push(t, Op::Scale(a, c), rg)
    }

    /// Softmax over the last axis of a matrix.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let (_, n) = va.matrix_dims();
        let mut out = vec![0.0; va.len()];
        for (src, dst) in va.data().chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            softmax_slice(src, dst);
        }
        let t = Tensor::new(va.shape().to_vec(), out).expect("shape preserved");
        let rg = self.rg(a);
        self.push(t, Op::SoftmaxRows(a), rg)
    }

    /// Row-wise layer normalization with affine `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (vx, vg, vb) = (self.value(x), self.value(gain), self.value(bias));
        let (m, n) = vx.matrix_dims();
        if vg.len() != n || vb.len() != n {
            return Err(dim_err("layer_norm", vx, vg));
        }
        let mut xhat = vec![0.0; m * n];
        let mut rstd = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &vx.data()[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd[r] = rs;
            for c in 0..n {
                let h = (row[c] - mean) * rs;
                xhat[r * n + c] = h;
                out[r * n + c] = h * vg.data()[c] + vb.data()[c];
            }
        }
        let t = Tensor::new(vx.shape().to_vec(), out)?;
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            t,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Batch normalization over the rows of `x[batch×features]`.
    ///
    /// With `running = None` the batch statistics are used and returned;
    /// otherwise the supplied statistics are treated as constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gain: Var,
        bias: Var,
        running: Option<&BatchStats>,
    ) -> Result<(Var, BatchStats)> {
        let (vx, vg, vb) = (self.value(x), self.value(gain), self.value(bias));
        let (m, n) = vx.matrix_dims();
        if vg.len() != n || vb.len() != n {
            return Err(dim_err("batch_norm", vx, vg));
        }
        let stats = match running {
            Some(s) => s.clone(),
            None => {
                let mut mean = vec![0.0; n];
                let mut var = vec![0.0; n];
                for r in 0..m {
                    for c in 0..n {
                        mean[c] += vx.data()[r * n + c];
                    }
                }
                mean.iter_mut().for_each(|v| *v /= m as f64);
                for r in 0..m {
                    for c in 0..n {
                        let d = vx.data()[r * n + c] - mean[c];
                        var[c] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= m as f64);
                BatchStats { mean, var }
            }
        };
        let rstd: Vec<f64> = stats
            .var
            .iter()
            .map(|v| 1.0 / (v + BATCH_NORM_EPS).sqrt())
            .collect();
        let mut xhat = vec![0.0; m * n];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            for c in 0..n {
                let h = (vx.data()[r * n + c] - stats.mean[c]) * rstd[c];
                xhat[r * n + c] = h;
                out[r * n + c] = h * vg.data()[c] + vb.data()[c];
            }
        }
        let t = Tensor::new(vx.shape().to_vec(), out)?;
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        let v = self.push(
            t,
            Op::BatchNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
                batch_stats: running.is_none(),
            },
            rg,
        );
        Ok((v, stats))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let out: Vec<f64> = va
            .data()
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()))
            .collect();
        let t = Tensor::new(va.shape().to_vec(), out).expect("shape preserved");
        let rg = self.rg(a);
        self.push(t, Op::Gelu(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let out: Vec<f64> = va.data().iter().map(|&x| x.max(0.0)).collect();
        let t = Tensor::new(va.shape().to_vec(), out).expect("shape preserved");
        let rg = self.rg(a);
        self.push(t, Op::Relu(a), rg)
    }

    /// Stacks `a[m×n]` on top of `b[k×n]`. A vector `a` counts as one row.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (ma, na) = va.matrix_dims();
        let (mb, nb) = vb.matrix_dims();
        if na != nb {
            return Err(dim_err("concat_rows", va, vb));
        }
        let mut out = Vec::with_capacity(va.len() + vb.len());
        out.extend_from_slice(va.data());
        out.extend_from_slice(vb.data());
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![ma + mb, na], out)?, Op::ConcatRows(a, b), rg))
    }

    /// Places matrices with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.mat(parts[0]).0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.mat(p);
            if pm != m {
                return Err(dim_err("concat_cols", self.value(parts[0]), self.value(p)));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; m * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..m {
                out[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::new(vec![m, total], out)?, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `[start, start + width)` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let va = self.value(a);
        let (m, n) = va.matrix_dims();
        if width == 0 || start + width > n {
            return Err(Error::Dimension {
                op: "slice_cols",
                lhs: va.shape().to_vec(),
                rhs: vec![start, width],
            });
        }
        let mut out = Vec::with_capacity(m * width);
        for r in 0..m {
            out.extend_from_slice(&va.data()[r * n + start..r * n + start + width]);
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(vec![m, width], out)?, Op::SliceCols(a, start), rg))
    }

    /// Row `i` of a matrix as a 1×n matrix.
    pub fn select_row(&mut self, a: Var, i: usize) -> Result<Var> {
        let va = self.value(a);
        let (m, n) = va.matrix_dims();
        if i >= m {
            return Err(Error::Dimension {
                op: "select_row",
                lhs: va.shape().to_vec(),
                rhs: vec![i],
            });
        }
        let out = va.row(i).to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor::new(vec![1, n], out)?, Op::SelectRow(a, i), rg))
    }

    /// Mean negative log-softmax of the target class over the rows of
    /// `logits[batch×C]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let vl = self.value(logits);
        let (m, c) = vl.matrix_dims();
        if targets.len() != m {
            return Err(Error::Dimension {
                op: "cross_entropy",
                lhs: vl.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::Label {
                label: bad,
                classes: c,
            });
        }
        let mut probs = vec![0.0; m * c];
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = &vl.data()[r * c..(r + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[t];
            softmax_slice(row, &mut probs[r * c..(r + 1) * c]);
        }
        loss /= m as f64;
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::from_vec(vec![loss]),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum::<f64>();
        let rg = self.rg(a);
        self.push(Tensor::from_vec(vec![s]), Op::Sum(a), rg)
    }

    /// Reverse sweep from the scalar `output`, seeding its gradient with 1.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.value(output).len() != 1 {
            return Err(Error::Dimension {
                op: "backward",
                lhs: self.value(output).shape().to_vec(),
                rhs: vec![1],
            });
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[output.0] = Some(vec![1.0]);
        for i in (0..=output.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.propagate(i, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, f: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let n = self.nodes[v.0].value.len();
        let slot = self.grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        f(slot);
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        // Temporarily detach the op so `self` can be borrowed mutably.
        let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.mat(*a);
                let n = self.mat(*b).1;
                if self.rg(*a) {
                    let bv = self.value(*b).data().to_vec();
                    self.accumulate(*a, |ga| gemm(m, n, k, g, false, &bv, true, ga, true));
                }
                if self.rg(*b) {
                    let av = self.value(*a).data().to_vec();
                    self.accumulate(*b, |gb| gemm(k, m, n, &av, true, g, false, gb, true));
                }
            }
            Op::MatMulNt(a, b) => {
                let (m, k) = self.mat(*a);
                let n = self.mat(*b).0;
                if self.rg(*a) {
                    let bv = self.value(*b).data().to_vec();
                    self.accumulate(*a, |ga| gemm(m, n, k, g, false, &bv, false, ga, true));
                }
                if self.rg(*b) {
                    let av = self.value(*a).data().to_vec();
                    self.accumulate(*b, |gb| gemm(n, m, k, g, true, &av, false, gb, true));
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    self.accumulate(v, |gv| gv.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                }
            }
            Op::AddRow(a, b) => {
                self.accumulate(*a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += y));
                let n = self.value(*b).len();
                self.accumulate(*b, |gb| {
                    for row in g.chunks_exact(n) {
                        gb.iter_mut().zip(row).for_each(|(x, y)| *x += y);
                    }
                });
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    let bv = self.value(*b).data().to_vec();
                    self.accumulate(*a, |ga| {
                        for ((x, gy), bb) in ga.iter_mut().zip(g).zip(&bv) {
                            *x += gy * bb;
                        }
                    });
                }
                if self.rg(*b) {
                    let av = self.value(*a).data().to_vec();
                    self.accumulate(*b, |gb| {
                        for ((x, gy), aa) in gb.iter_mut().zip(g).zip(&av) {
                            *x += gy * aa;
                        }
                    });
                }
            }
            Op::Scale(a, c) => {
                let c = *c;
                self.accumulate(*a, |ga| ga.iter_mut().zip(g).for_each(|(x, y)| *x += c * y));
            }
            Op::SoftmaxRows(a) => {
                let y = self.nodes[i].value.data().to_vec();
                let n = self.nodes[i].value.matrix_dims().1;
                self.accumulate(*a, |ga| {
                    for ((gr, yr), outr) in g.chunks_exact(n).zip(y.chunks_exact(n)).zip(ga.chunks_exact_mut(n)) {
                        let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                        for j in 0..n {
                            outr[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let n = self.value(*gain).len();
                let gv = self.value(*gain).data().to_vec();
                self.accumulate(*gain, |gg| {
                    for (gr, hr) in g.chunks_exact(n).zip(xhat.chunks_exact(n)) {
                        for j in 0..n {
                            gg[j] += gr[j] * hr[j];
                        }
                    }
                });
                self.accumulate(*bias, |gb| {
                    for gr in g.chunks_exact(n) {
                        gb.iter_mut().zip(gr).for_each(|(a, b)| *a += b);
                    }
                });
                self.accumulate(*x, |gx| {
                    let mut dh = vec![0.0; n];
                    for (r, ((gr, hr), out)) in g
                        .chunks_exact(n)
                        .zip(xhat.chunks_exact(n))
                        .zip(gx.chunks_exact_mut(n))
                        .enumerate()
                    {
                        for j in 0..n {
                            dh[j] = gr[j] * gv[j];
                        }
                        let mean_dh = dh.iter().sum::<f64>() / n as f64;
                        let mean_dhh = dh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                        for j in 0..n {
                            out[j] += rstd[r] * (dh[j] - mean_dh - hr[j] * mean_dhh);
                        }
                    }
                });
            }
            Op::BatchNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
                batch_stats,
            } => {
                let n = self.value(*gain).len();
                let m = xhat.len() / n;
                let gv = self.value(*gain).data().to_vec();
                self.accumulate(*gain, |gg| {
                    for (gr, hr) in g.chunks_exact(n).zip(xhat.chunks_exact(n)) {
                        for j in 0..n {
                            gg[j] += gr[j] * hr[j];
                        }
                    }
                });
                self.accumulate(*bias, |gb| {
                    for gr in g.chunks_exact(n) {
                        gb.iter_mut().zip(gr).for_each(|(a, b)| *a += b);
                    }
                });
                let batch_stats = *batch_stats;
                self.accumulate(*x, |gx| {
                    for c in 0..n {
                        let dh: Vec<f64> = (0..m).map(|r| g[r * n + c] * gv[c]).collect();
                        if batch_stats {
                            let mean_dh = dh.iter().sum::<f64>() / m as f64;
                            let mean_dhh =
                                (0..m).map(|r| dh[r] * xhat[r * n + c]).sum::<f64>() / m as f64;
                            for r in 0..m {
                                gx[r * n + c] +=
                                    rstd[c] * (dh[r] - mean_dh - xhat[r * n + c] * mean_dhh);
                            }
                        } else {
                            for r in 0..m {
                                gx[r * n + c] += rstd[c] * dh[r];
                            }
                        }
                    }
                });
            }
            Op::Gelu(a) => {
                let xv = self.value(*a).data().to_vec();
                self.accumulate(*a, |ga| {
                    for ((out, gy), &x) in ga.iter_mut().zip(g).zip(&xv) {
                        let u = GELU_C * (x + GELU_A * x * x * x);
                        let t = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                        *out += gy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
                    }
                });
            }
            Op::Relu(a) => {
                let xv = self.value(*a).data().to_vec();
                self.accumulate(*a, |ga| {
                    for ((out, gy), &x) in ga.iter_mut().zip(g).zip(&xv) {
                        if x > 0.0 {
                            *out += gy;
                        }
                    }
                });
            }
            Op::ConcatRows(a, b) => {
                let na = self.value(*a).len();
                self.accumulate(*a, |ga| ga.iter_mut().zip(&g[..na]).for_each(|(x, y)| *x += y));
                self.accumulate(*b, |gb| gb.iter_mut().zip(&g[na..]).for_each(|(x, y)| *x += y));
            }
            Op::ConcatCols(parts) => {
                let (m, total) = self.nodes[i].value.matrix_dims();
                let mut offset = 0;
                for &p in parts {
                    let w = self.mat(p).1;
                    self.accumulate(p, |gp| {
                        for r in 0..m {
                            for j in 0..w {
                                gp[r * w + j] += g[r * total + offset + j];
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                let (m, w) = self.nodes[i].value.matrix_dims();
                let n = self.mat(*a).1;
                let start = *start;
                self.accumulate(*a, |ga| {
                    for r in 0..m {
                        for j in 0..w {
                            ga[r * n + start + j] += g[r * w + j];
                        }
                    }
                });
            }
            Op::SelectRow(a, row) => {
                let n = self.mat(*a).1;
                let row = *row;
                self.accumulate(*a, |ga| {
                    ga[row * n..(row + 1) * n]
                        .iter_mut()
                        .zip(g)
                        .for_each(|(x, y)| *x += y);
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let c = self.mat(*logits).1;
                let scale = g[0] / targets.len() as f64;
                self.accumulate(*logits, |gl| {
                    for (r, &t) in targets.iter().enumerate() {
                        for j in 0..c {
                            let ind = if j == t { 1.0 } else { 0.0 };
                            gl[r * c + j] += scale * (probs[r * c + j] - ind);
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let s = g[0];
                self.accumulate(*a, |ga| ga.iter_mut().for_each(|x| *x += s));
            }
        }
        self.nodes[i].op = op;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::from_rows(&[vec![3.0, 3.0, 3.0]]));
        let g = t.constant(Tensor::full(&[3], 1.0));
        let b = t.constant(Tensor::zeros(&[3]));
        let y = t.layer_norm(x, g, b).unwrap();
        assert!(t.value(y).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn layer_norm_two_values() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::from_rows(&[vec![1.0, 3.0]]));
        let g = t.constant(Tensor::full(&[2], 1.0));
        let b = t.constant(Tensor::zeros(&[2]));
        let y = t.layer_norm(x, g, b).unwrap();
        let v = t.value(y).data();
        assert!((v[0] + 1.0).abs() < 1e-3 && (v[1] - 1.0).abs() < 1e-3);
        // closed form: ±1/sqrt(1 + eps)
        assert!((v[1] - 1.0 / (1.0 + LAYER_NORM_EPS).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_limits() {
        let mut t = Tape::new();
        let l = t.constant(Tensor::full(&[1, 4], 0.0));
        let ce = t.cross_entropy(l, &[2]).unwrap();
        assert!((t.scalar(ce) - 4f64.ln()).abs() < 1e-15);

        let l = t.constant(Tensor::from_rows(&[vec![0.0, 1000.0, 0.0]]));
        let ce = t.cross_entropy(l, &[1]).unwrap();
        assert!(t.scalar(ce).abs() < 1e-12);

        let err = t.cross_entropy(l, &[3]).unwrap_err();
        assert!(matches!(err, Error::Label { label: 3, classes: 3 }));
    }

    #[test]
    fn backward_skips_constants() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::from_rows(&[vec![1.0, 2.0]]), true);
        let b = t.constant(Tensor::from_rows(&[vec![3.0], vec![4.0]]));
        let c = t.matmul(a, b).unwrap();
        let s = t.sum(c);
        t.backward(s).unwrap();
        assert_eq!(t.grad(a).unwrap(), &[3.0, 4.0]);
        assert!(t.grad(b).is_none());
    }

    #[test]
    fn backward_requires_scalar() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(&[2]), true);
        assert!(t.backward(a).is_err());
    }
}
