use crate::error::{AdError, Result};
use crate::tensor::Tensor;

/// Norms below this are treated as degenerate in [`Graph::cosine_similarity`].
pub const MIN_NORM: f64 = 1e-12;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    SoftmaxRows(Var),
    LogSumExpRows { x: Var, exclude_diag: bool },
    Transpose(Var),
    Diag(Var),
    SelectRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Cosine {
        a: Var,
        b: Var,
        a_norms: Vec<f64>,
        b_norms: Vec<f64>,
    },
    BatchNormTrain {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    BatchNormEval {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Tape of operations recorded in execution order.
///
/// Nodes are appended as they are created, so the node list is always in
/// topological order and a single reverse sweep visits every node once.
#[derive(Debug, Default, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Batch statistics produced by a training-mode batch normalization.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased (n-1) variance, as used for running-statistic updates.
    pub var_unbiased: Vec<f64>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push_leaf(value, requires_grad)
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn shape_err(&self, op: &'static str, a: Var, b: Var) -> AdError {
        AdError::Shape {
            op,
            left: self.value(a).shape().to_vec(),
            right: self.value(b).shape().to_vec(),
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.shape_err(op, a, b));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(op, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// Adds a `1×n` bias row to every row of an `m×n` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, n) = self.value(x).require_matrix("add_row")?;
        let bshape = self.value(bias).shape();
        if !(bshape == [1, n] || bshape == [n]) {
            return Err(self.shape_err("add_row", x, bias));
        }
        let b = self.value(bias).data().to_vec();
        let tx = self.value(x);
        let data = tx
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(&b).map(|(v, bb)| v + bb))
            .collect();
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddRow(x, bias), &[x, bias]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::Scale(x, c), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::exp);
        self.push(out, Op::Exp(x), &[x])
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(v) = self.value(x).data().iter().find(|v| !(**v > 0.0)) {
            return Err(AdError::Domain {
                op: "log",
                msg: format!("non-positive input {v}"),
            });
        }
        let out = self.value(x).map(f64::ln);
        Ok(self.push(out, Op::Log(x), &[x]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.value(x).require_matrix("softmax_rows")?;
        let t = self.value(x);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = t.row(i);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..n {
                let e = (row[j] - mx).exp();
                out[i * n + j] = e;
                z += e;
            }
            for j in 0..n {
                out[i * n + j] /= z;
            }
        }
        let out = Tensor::matrix(m, n, out)?;
        Ok(self.push(out, Op::SoftmaxRows(x), &[x]))
    }

    /// Row-wise log-sum-exp of an `m×n` matrix, giving an `m×1` column.
    ///
    /// With `exclude_diag` the matrix must be square and entry `(j, j)` is
    /// left out of row `j`.
    pub fn logsumexp_rows(&mut self, x: Var, exclude_diag: bool) -> Result<Var> {
        let (m, n) = self.value(x).require_matrix("logsumexp_rows")?;
        if exclude_diag && (m != n || n < 2) {
            return Err(AdError::Domain {
                op: "logsumexp_rows",
                msg: format!("diagonal exclusion needs a square matrix with n >= 2, got {m}x{n}"),
            });
        }
        let t = self.value(x);
        let mut out = Vec::with_capacity(m);
        for i in 0..m {
            let row = t.row(i);
            let keep = |j: usize| !(exclude_diag && j == i);
            let mx = (0..n)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = (0..n).filter(|&j| keep(j)).map(|j| (row[j] - mx).exp()).sum();
            out.push(mx + s.ln());
        }
        let out = Tensor::matrix(m, 1, out)?;
        Ok(self.push(out, Op::LogSumExpRows { x, exclude_diag }, &[x]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).transpose()?;
        Ok(self.push(out, Op::Transpose(x), &[x]))
    }

    /// Diagonal of a square matrix as an `n×1` column.
    pub fn diag(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.value(x).require_matrix("diag")?;
        if m != n {
            return Err(AdError::Domain {
                op: "diag",
                msg: format!("expected a square matrix, got {m}x{n}"),
            });
        }
        let t = self.value(x);
        let d = (0..n).map(|i| t.get(i, i)).collect();
        let out = Tensor::matrix(n, 1, d)?;
        Ok(self.push(out, Op::Diag(x), &[x]))
    }

    pub fn select_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (m, _) = self.value(x).require_matrix("select_rows")?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(AdError::Domain {
                op: "select_rows",
                msg: format!("row {bad} out of range for {m} rows"),
            });
        }
        let out = self.value(x).select_rows(idx);
        Ok(self.push(out, Op::SelectRows(x, idx.to_vec()), &[x]))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(AdError::Domain {
            op: "concat_rows",
            msg: "no inputs".into(),
        })?;
        let (_, n) = self.value(first).require_matrix("concat_rows")?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = self.value(p).require_matrix("concat_rows")?;
            if c != n {
                return Err(self.shape_err("concat_rows", first, p));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::matrix(rows, n, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Side-by-side concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(AdError::Domain {
            op: "concat_cols",
            msg: "no inputs".into(),
        })?;
        let (m, _) = self.value(first).require_matrix("concat_cols")?;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.value(p).require_matrix("concat_cols")?;
            if r != m {
                return Err(self.shape_err("concat_cols", first, p));
            }
            cols += c;
        }
        let mut data = Vec::with_capacity(m * cols);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::matrix(m, cols, data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Pairwise cosine similarity: entry `(j, k)` is `cos(a_j, b_k)`.
    pub fn cosine_similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, da) = self.value(a).require_matrix("cosine_similarity")?;
        let (rb, db) = self.value(b).require_matrix("cosine_similarity")?;
        if da != db {
            return Err(self.shape_err("cosine_similarity", a, b));
        }
        let norms = |t: &Tensor, side: &'static str| -> Result<Vec<f64>> {
            (0..t.rows())
                .map(|i| {
                    let n = t.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                    if n < MIN_NORM {
                        Err(AdError::DegenerateEmbedding { side, row: i, norm: n })
                    } else {
                        Ok(n)
                    }
                })
                .collect()
        };
        let a_norms = norms(self.value(a), "a")?;
        let b_norms = norms(self.value(b), "b")?;
        let (ta, tb) = (self.value(a), self.value(b));
        let mut out = vec![0.0; ra * rb];
        for j in 0..ra {
            for k in 0..rb {
                let dot: f64 = ta.row(j).iter().zip(tb.row(k)).map(|(x, y)| x * y).sum();
                out[j * rb + k] = dot / (a_norms[j] * b_norms[k]);
            }
        }
        let out = Tensor::matrix(ra, rb, out)?;
        Ok(self.push(
            out,
            Op::Cosine {
                a,
                b,
                a_norms,
                b_norms,
            },
            &[a, b],
        ))
    }

    fn check_bn(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize)> {
        let (m, n) = self.value(x).require_matrix("batchnorm1d")?;
        for p in [gamma, beta] {
            let s = self.value(p).shape();
            if !(s == [1, n] || s == [n]) {
                return Err(self.shape_err("batchnorm1d", x, p));
            }
        }
        Ok((m, n))
    }

    /// Training-mode batch normalization over rows using batch statistics.
    pub fn batchnorm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        let (m, n) = self.check_bn(x, gamma, beta)?;
        if m < 2 {
            return Err(AdError::Domain {
                op: "batchnorm1d",
                msg: format!("training mode needs at least 2 rows, got {m}"),
            });
        }
        let t = self.value(x);
        let mut mean = vec![0.0; n];
        for i in 0..m {
            for (mu, v) in mean.iter_mut().zip(t.row(i)) {
                *mu += v;
            }
        }
        mean.iter_mut().for_each(|mu| *mu /= m as f64);
        let mut var = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                let d = t.get(i, j) - mean[j];
                var[j] += d * d;
            }
        }
        let var_biased: Vec<f64> = var.iter().map(|v| v / m as f64).collect();
        let var_unbiased = var.iter().map(|v| v / (m - 1) as f64).collect();
        let inv_std: Vec<f64> = var_biased.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (xhat, out) = self.bn_apply(x, gamma, beta, &mean, &inv_std);
        let out = Tensor::matrix(m, n, out)?;
        let var = self.push(
            out,
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        );
        Ok((var, BatchStats { mean, var_unbiased }))
    }

    /// Evaluation-mode batch normalization with fixed statistics.
    pub fn batchnorm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        let (m, n) = self.check_bn(x, gamma, beta)?;
        if running_mean.len() != n || running_var.len() != n {
            return Err(AdError::Shape {
                op: "batchnorm1d",
                left: vec![n],
                right: vec![running_mean.len(), running_var.len()],
            });
        }
        let inv_std: Vec<f64> = running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (xhat, out) = self.bn_apply(x, gamma, beta, running_mean, &inv_std);
        let out = Tensor::matrix(m, n, out)?;
        Ok(self.push(
            out,
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    fn bn_apply(&self, x: Var, gamma: Var, beta: Var, mean: &[f64], inv_std: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let t = self.value(x);
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let n = mean.len();
        let mut xhat = Vec::with_capacity(t.numel());
        let mut out = Vec::with_capacity(t.numel());
        for (idx, v) in t.data().iter().enumerate() {
            let j = idx % n;
            let h = (v - mean[j]) * inv_std[j];
            xhat.push(h);
            out.push(g[j] * h + b[j]);
        }
        (xhat, out)
    }

    /// Reverse sweep from a scalar `loss`, accumulating into every leaf that
    /// requires a gradient. Repeated calls add to existing leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(AdError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Leaf = self.nodes[i].op {
                match &mut self.nodes[i].grad {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            for (input, contrib) in self.local_grads(i, &g)? {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let node = &self.nodes[i];
        let like = |v: Var, data: Vec<f64>| Tensor::new(self.value(v).shape().to_vec(), data);
        let out = match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let ta = self.value(*a);
                let tb = self.value(*b);
                let da = g.matmul(&tb.transpose()?)?;
                let db = ta.transpose()?.matmul(g)?;
                vec![(*a, da), (*b, db)]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                let da = g.data().iter().zip(tb).map(|(x, y)| x * y).collect();
                let db = g.data().iter().zip(ta).map(|(x, y)| x * y).collect();
                vec![(*a, like(*a, da)?), (*b, like(*b, db)?)]
            }
            Op::AddRow(x, bias) => {
                let n = self.value(*bias).numel();
                let mut db = vec![0.0; n];
                for row in g.data().chunks(n) {
                    for (acc, v) in db.iter_mut().zip(row) {
                        *acc += v;
                    }
                }
                vec![(*x, g.clone()), (*bias, like(*bias, db)?)]
            }
            Op::Scale(x, c) => vec![(*x, g.map(|v| v * c))],
            Op::Relu(x) => {
                let tx = self.value(*x).data();
                let d = g.data().iter().zip(tx).map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 }).collect();
                vec![(*x, like(*x, d)?)]
            }
            Op::Exp(x) => {
                let y = node.value.data();
                let d = g.data().iter().zip(y).map(|(a, b)| a * b).collect();
                vec![(*x, like(*x, d)?)]
            }
            Op::Log(x) => {
                let tx = self.value(*x).data();
                let d = g.data().iter().zip(tx).map(|(a, b)| a / b).collect();
                vec![(*x, like(*x, d)?)]
            }
            Op::Sum(x) => {
                let s = g.item();
                vec![(*x, Tensor::filled(self.value(*x).shape(), s))]
            }
            Op::Mean(x) => {
                let n = self.value(*x).numel() as f64;
                vec![(*x, Tensor::filled(self.value(*x).shape(), g.item() / n))]
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let (m, n) = (y.rows(), y.cols());
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for c in 0..n {
                        d[r * n + c] = yr[c] * (gr[c] - dot);
                    }
                }
                vec![(*x, like(*x, d)?)]
            }
            Op::LogSumExpRows { x, exclude_diag } => {
                let tx = self.value(*x);
                let (m, n) = (tx.rows(), tx.cols());
                let lse = node.value.data();
                let mut d = vec![0.0; m * n];
                for r in 0..m {
                    for c in 0..n {
                        if *exclude_diag && r == c {
                            continue;
                        }
                        d[r * n + c] = g.data()[r] * (tx.get(r, c) - lse[r]).exp();
                    }
                }
                vec![(*x, like(*x, d)?)]
            }
            Op::Transpose(x) => vec![(*x, g.transpose()?)],
            Op::Diag(x) => {
                let n = self.value(*x).rows();
                let mut d = vec![0.0; n * n];
                for r in 0..n {
                    d[r * n + r] = g.data()[r];
                }
                vec![(*x, like(*x, d)?)]
            }
            Op::SelectRows(x, idx) => {
                let tx = self.value(*x);
                let c = tx.cols();
                let mut d = vec![0.0; tx.numel()];
                for (k, &r) in idx.iter().enumerate() {
                    for j in 0..c {
                        d[r * c + j] += g.data()[k * c + j];
                    }
                }
                vec![(*x, like(*x, d)?)]
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                let mut res = Vec::with_capacity(parts.len());
                for p in parts {
                    let len = self.value(*p).numel();
                    res.push((*p, like(*p, g.data()[offset..offset + len].to_vec())?));
                    offset += len;
                }
                res
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut offset = 0;
                let mut res = Vec::with_capacity(parts.len());
                for p in parts {
                    let (r, c) = (self.value(*p).rows(), self.value(*p).cols());
                    let mut d = Vec::with_capacity(r * c);
                    for i in 0..r {
                        d.extend_from_slice(&g.data()[i * total + offset..i * total + offset + c]);
                    }
                    res.push((*p, like(*p, d)?));
                    offset += c;
                }
                res
            }
            Op::Cosine {
                a,
                b,
                a_norms,
                b_norms,
            } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (ra, rb, dim) = (ta.rows(), tb.rows(), ta.cols());
                let s = &node.value;
                let mut da = vec![0.0; ra * dim];
                let mut db = vec![0.0; rb * dim];
                // dS_jk/da_j = b_k/(|a_j||b_k|) - S_jk a_j/|a_j|^2
                for j in 0..ra {
                    for k in 0..rb {
                        let gjk = g.get(j, k);
                        if gjk == 0.0 {
                            continue;
                        }
                        let sjk = s.get(j, k);
                        let inv = 1.0 / (a_norms[j] * b_norms[k]);
                        let ia2 = 1.0 / (a_norms[j] * a_norms[j]);
                        let ib2 = 1.0 / (b_norms[k] * b_norms[k]);
                        let (arow, brow) = (ta.row(j), tb.row(k));
                        for t in 0..dim {
                            da[j * dim + t] += gjk * (brow[t] * inv - sjk * arow[t] * ia2);
                            db[k * dim + t] += gjk * (arow[t] * inv - sjk * brow[t] * ib2);
                        }
                    }
                }
                vec![(*a, like(*a, da)?), (*b, like(*b, db)?)]
            }
            Op::BatchNormTrain {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gam = self.value(*gamma).data();
                let n = gam.len();
                let m = xhat.len() / n;
                let (dgamma, dbeta) = bn_param_grads(g.data(), xhat, n);
                let mut sum_dxhat = vec![0.0; n];
                let mut sum_dxhat_xhat = vec![0.0; n];
                for idx in 0..m * n {
                    let j = idx % n;
                    let dxh = g.data()[idx] * gam[j];
                    sum_dxhat[j] += dxh;
                    sum_dxhat_xhat[j] += dxh * xhat[idx];
                }
                let mf = m as f64;
                let dx = (0..m * n)
                    .map(|idx| {
                        let j = idx % n;
                        let dxh = g.data()[idx] * gam[j];
                        inv_std[j] / mf * (mf * dxh - sum_dxhat[j] - xhat[idx] * sum_dxhat_xhat[j])
                    })
                    .collect();
                vec![
                    (*x, like(*x, dx)?),
                    (*gamma, like(*gamma, dgamma)?),
                    (*beta, like(*beta, dbeta)?),
                ]
            }
            Op::BatchNormEval {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gam = self.value(*gamma).data();
                let n = gam.len();
                let (dgamma, dbeta) = bn_param_grads(g.data(), xhat, n);
                let dx = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(idx, gv)| gv * gam[idx % n] * inv_std[idx % n])
                    .collect();
                vec![
                    (*x, like(*x, dx)?),
                    (*gamma, like(*gamma, dgamma)?),
                    (*beta, like(*beta, dbeta)?),
                ]
            }
        };
        Ok(out)
    }
}

fn bn_param_grads(g: &[f64], xhat: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut dgamma = vec![0.0; n];
    let mut dbeta = vec![0.0; n];
    for (idx, (gv, xh)) in g.iter().zip(xhat).enumerate() {
        dgamma[idx % n] += gv * xh;
        dbeta[idx % n] += gv;
    }
    (dgamma, dbeta)
}
