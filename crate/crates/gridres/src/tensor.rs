//! Dense rank-2 tensors and a reverse-mode automatic differentiation tape.
//!
//! The engine is deliberately small: row-major `f64` matrices, a flat tape of
//! recorded operations, and enum-dispatched backward rules. Every forward op
//! checks shapes and rejects non-finite results, so a NaN surfaces at the op
//! that produced it instead of three layers later in a loss.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFiniteValue { op: &'static str },
}

pub type Result<T> = std::result::Result<T, TensorError>;

fn mismatch(op: &'static str, detail: String) -> TensorError {
    TensorError::ShapeMismatch { op, detail }
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![v] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(mismatch(
                "from_vec",
                format!("{}x{} needs {} values, got {}", rows, cols, rows * cols, data.len()),
            ));
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(mismatch("from_rows", "ragged rows".into()));
            }
            data.extend_from_slice(row);
        }
        Ok(Tensor { rows: r, cols: c, data })
    }

    /// Glorot-uniform initialization: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
    pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        Tensor { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{}", self.rows, self.cols)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    /// In-place elementwise accumulation; shapes must match.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if !self.same_shape(other) {
            return Err(mismatch(
                "add_assign",
                format!("{} vs {}", self.shape_str(), other.shape_str()),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale_assign(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    /// Plain (non-tracked) matrix product.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(mismatch(
                "matmul",
                format!("{} * {}", self.shape_str(), other.shape_str()),
            ));
        }
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = Tensor::zeros(n, m);
        for i in 0..n {
            let a_row = &self.data[i * k..(i + 1) * k];
            let o_row = &mut out.data[i * m..(i + 1) * m];
            for (p, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[p * m..(p + 1) * m];
                for (o, &b) in o_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn transposed(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// rhs is 1xC, broadcast-added to every row of lhs.
    AddRow(Var, Var),
    Transpose(Var),
    Relu(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    /// mask entries are 0 or 1/(1-p); identity in eval mode.
    Dropout { x: Var, mask: Vec<f64> },
    GlobalMaxPool { x: Var, argmax: Vec<usize> },
    ConcatCols(Var, Var),
    Scale(Var, f64),
    /// Multiply every entry of `x` by the 1x1 scalar node `s`.
    MulScalar { x: Var, s: Var },
    SliceCols { x: Var, start: usize },
    Sum(Var),
    CrossEntropy { logits: Var, label: usize },
    Mse { pred: Var, target: Tensor },
}

struct Node {
    value: Tensor,
    grad: Option<Tensor>,
    op: Op,
}

/// Records every op applied through it; `backward` walks the record in
/// reverse to produce gradients of a scalar loss w.r.t. every node.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFiniteValue { op: name });
        }
        self.nodes.push(Node { value, grad: None, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node { value, grad: None, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient of the last `backward` loss w.r.t. `v`; zeros if the node
    /// did not influence the loss.
    pub fn grad(&self, v: Var) -> Tensor {
        let node = &self.nodes[v.0];
        node.grad.clone().unwrap_or_else(|| Tensor::zeros(node.value.rows, node.value.cols))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        self.push(value, Op::MatMul(a, b), "matmul")
    }

    /// Elementwise add; if `b` is a single row it broadcasts over rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.same_shape(vb) {
            let mut out = va.clone();
            out.add_assign(vb)?;
            self.push(out, Op::Add(a, b), "add")
        } else if vb.rows == 1 && vb.cols == va.cols {
            let mut out = va.clone();
            for r in 0..out.rows {
                for c in 0..out.cols {
                    out.data[r * out.cols + c] += vb.data[c];
                }
            }
            self.push(out, Op::AddRow(a, b), "add")
        } else {
            Err(mismatch("add", format!("{} + {}", va.shape_str(), vb.shape_str())))
        }
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.transposed();
        self.push(value, Op::Transpose(a), "transpose")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let mut value = self.nodes[a.0].value.clone();
        value.data.iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(value, Op::Relu(a), "relu")
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let mut value = self.nodes[a.0].value.clone();
        value.data.iter_mut().for_each(|v| *v = v.tanh());
        self.push(value, Op::Tanh(a), "tanh")
    }

    /// Numerically stable softmax applied independently to each row.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let src = &self.nodes[a.0].value;
        let mut value = src.clone();
        for r in 0..value.rows {
            let row = &mut value.data[r * value.cols..(r + 1) * value.cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        self.push(value, Op::SoftmaxRows(a), "softmax")
    }

    /// Inverted dropout: in train mode each entry is zeroed with probability
    /// `p` and survivors are scaled by 1/(1-p); eval mode is the identity.
    pub fn dropout(&mut self, a: Var, p: f64, train: bool, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(mismatch("dropout", format!("p={p} outside [0,1)")));
        }
        if !train || p == 0.0 {
            let value = self.nodes[a.0].value.clone();
            let mask = vec![1.0; value.data.len()];
            return self.push(value, Op::Dropout { x: a, mask }, "dropout");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let keep = 1.0 - p;
        let src = &self.nodes[a.0].value;
        let mask: Vec<f64> =
            (0..src.data.len()).map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
        let mut value = src.clone();
        for (v, m) in value.data.iter_mut().zip(&mask) {
            *v *= m;
        }
        self.push(value, Op::Dropout { x: a, mask }, "dropout")
    }

    /// Column-wise max over rows: NxC -> 1xC. Gradient flows to the
    /// lowest-index maximizing row of each column.
    pub fn global_max_pool(&mut self, a: Var) -> Result<Var> {
        let src = &self.nodes[a.0].value;
        if src.rows == 0 {
            return Err(mismatch("global_max_pool", "empty input".into()));
        }
        let mut value = Tensor::zeros(1, src.cols);
        let mut argmax = vec![0usize; src.cols];
        for c in 0..src.cols {
            let mut best = src.data[c];
            let mut best_r = 0;
            for r in 1..src.rows {
                let v = src.data[r * src.cols + c];
                if v > best {
                    best = v;
                    best_r = r;
                }
            }
            value.data[c] = best;
            argmax[c] = best_r;
        }
        self.push(value, Op::GlobalMaxPool { x: a, argmax }, "global_max_pool")
    }

    /// Concatenates two matrices with equal row counts along columns.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.rows != vb.rows {
            return Err(mismatch(
                "concat_cols",
                format!("{} | {}", va.shape_str(), vb.shape_str()),
            ));
        }
        let mut value = Tensor::zeros(va.rows, va.cols + vb.cols);
        for r in 0..va.rows {
            let dst = &mut value.data[r * (va.cols + vb.cols)..];
            dst[..va.cols].copy_from_slice(va.row(r));
            dst[va.cols..va.cols + vb.cols].copy_from_slice(vb.row(r));
        }
        self.push(value, Op::ConcatCols(a, b), "concat_cols")
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let mut value = self.nodes[a.0].value.clone();
        value.scale_assign(c);
        self.push(value, Op::Scale(a, c), "scale")
    }

    /// Multiplies matrix `x` by a 1x1 scalar node.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let vs = &self.nodes[s.0].value;
        if vs.rows != 1 || vs.cols != 1 {
            return Err(mismatch("mul_scalar", format!("scalar is {}", vs.shape_str())));
        }
        let c = vs.data[0];
        let mut value = self.nodes[x.0].value.clone();
        value.scale_assign(c);
        self.push(value, Op::MulScalar { x, s }, "mul_scalar")
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let src = &self.nodes[a.0].value;
        if start + len > src.cols {
            return Err(mismatch(
                "slice_cols",
                format!("[{start}, {}) of {}", start + len, src.shape_str()),
            ));
        }
        let mut value = Tensor::zeros(src.rows, len);
        for r in 0..src.rows {
            value.data[r * len..(r + 1) * len]
                .copy_from_slice(&src.data[r * src.cols + start..r * src.cols + start + len]);
        }
        self.push(value, Op::SliceCols { x: a, start }, "slice_cols")
    }

    /// Sum of all entries, as a 1x1 tensor.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let total: f64 = self.nodes[a.0].value.data.iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a), "sum")
    }

    /// Softmax cross-entropy of a 1xC logit row against a class index.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let v = &self.nodes[logits.0].value;
        if v.rows != 1 || label >= v.cols {
            return Err(mismatch(
                "cross_entropy",
                format!("logits {} label {label}", v.shape_str()),
            ));
        }
        let max = v.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum: f64 = v.data.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
        let loss = log_sum - v.data[label];
        self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, label }, "cross_entropy")
    }

    /// Mean squared error between a prediction node and a constant target.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let v = &self.nodes[pred.0].value;
        if !v.same_shape(target) {
            return Err(mismatch(
                "mse",
                format!("{} vs {}", v.shape_str(), target.shape_str()),
            ));
        }
        let n = v.data.len() as f64;
        let loss = v.data.iter().zip(&target.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        self.push(Tensor::scalar(loss), Op::Mse { pred, target: target.clone() }, "mse")
    }

    fn accumulate(&mut self, v: Var, delta: Tensor) {
        match &mut self.nodes[v.0].grad {
            Some(g) => {
                for (a, b) in g.data.iter_mut().zip(&delta.data) {
                    *a += b;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    /// Backpropagates from a 1x1 loss node. Gradients accumulate on every
    /// node reachable from the loss; previous gradients on this tape are
    /// cleared first.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = &self.nodes[loss.0].value;
        if lv.rows != 1 || lv.cols != 1 {
            return Err(mismatch("backward", format!("loss is {}", lv.shape_str())));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(grad) = self.nodes[i].grad.clone() else { continue };
            if !grad.is_finite() {
                return Err(TensorError::NonFiniteValue { op: "backward" });
            }
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = grad.matmul(&self.nodes[b.0].value.transposed())?;
                    let db = self.nodes[a.0].value.transposed().matmul(&grad)?;
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    self.accumulate(a, grad.clone());
                    self.accumulate(b, grad);
                }
                Op::AddRow(a, b) => {
                    let (a, b) = (*a, *b);
                    let mut db = Tensor::zeros(1, grad.cols);
                    for r in 0..grad.rows {
                        for c in 0..grad.cols {
                            db.data[c] += grad.data[r * grad.cols + c];
                        }
                    }
                    self.accumulate(a, grad);
                    self.accumulate(b, db);
                }
                Op::Transpose(a) => {
                    let a = *a;
                    self.accumulate(a, grad.transposed());
                }
                Op::Relu(a) => {
                    let a = *a;
                    let mut da = grad;
                    for (g, &x) in da.data.iter_mut().zip(&self.nodes[a.0].value.data) {
                        if x <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::Tanh(a) => {
                    let a = *a;
                    let mut da = grad;
                    for (g, &y) in da.data.iter_mut().zip(&self.nodes[i].value.data) {
                        *g *= 1.0 - y * y;
                    }
                    self.accumulate(a, da);
                }
                Op::SoftmaxRows(a) => {
                    let a = *a;
                    let y = &self.nodes[i].value;
                    let mut da = Tensor::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let yr = &y.data[r * y.cols..(r + 1) * y.cols];
                        let gr = &grad.data[r * y.cols..(r + 1) * y.cols];
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..y.cols {
                            da.data[r * y.cols + c] = yr[c] * (gr[c] - dot);
                        }
                    }
                    self.accumulate(a, da);
                }
                Op::Dropout { x, mask } => {
                    let x = *x;
                    let mut da = grad;
                    for (g, m) in da.data.iter_mut().zip(mask) {
                        *g *= m;
                    }
                    self.accumulate(x, da);
                }
                Op::GlobalMaxPool { x, argmax } => {
                    let x = *x;
                    let src = &self.nodes[x.0].value;
                    let mut da = Tensor::zeros(src.rows, src.cols);
                    for (c, &r) in argmax.iter().enumerate() {
                        da.data[r * src.cols + c] = grad.data[c];
                    }
                    self.accumulate(x, da);
                }
                Op::ConcatCols(a, b) => {
                    let (a, b) = (*a, *b);
                    let ca = self.nodes[a.0].value.cols;
                    let cb = self.nodes[b.0].value.cols;
                    let rows = grad.rows;
                    let mut da = Tensor::zeros(rows, ca);
                    let mut db = Tensor::zeros(rows, cb);
                    for r in 0..rows {
                        let src = &grad.data[r * (ca + cb)..(r + 1) * (ca + cb)];
                        da.data[r * ca..(r + 1) * ca].copy_from_slice(&src[..ca]);
                        db.data[r * cb..(r + 1) * cb].copy_from_slice(&src[ca..]);
                    }
                    self.accumulate(a, da);
                    self.accumulate(b, db);
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    let mut da = grad;
                    da.scale_assign(c);
                    self.accumulate(a, da);
                }
                Op::MulScalar { x, s } => {
                    let (x, s) = (*x, *s);
                    let c = self.nodes[s.0].value.data[0];
                    let xv = &self.nodes[x.0].value;
                    let ds: f64 = grad.data.iter().zip(&xv.data).map(|(g, v)| g * v).sum();
                    let mut dx = grad;
                    dx.scale_assign(c);
                    self.accumulate(x, dx);
                    self.accumulate(s, Tensor::scalar(ds));
                }
                Op::SliceCols { x, start } => {
                    let (x, start) = (*x, *start);
                    let src = &self.nodes[x.0].value;
                    let mut da = Tensor::zeros(src.rows, src.cols);
                    for r in 0..grad.rows {
                        for c in 0..grad.cols {
                            da.data[r * src.cols + start + c] = grad.data[r * grad.cols + c];
                        }
                    }
                    self.accumulate(x, da);
                }
                Op::Sum(a) => {
                    let a = *a;
                    let src = &self.nodes[a.0].value;
                    let da = Tensor::filled(src.rows, src.cols, grad.data[0]);
                    self.accumulate(a, da);
                }
                Op::CrossEntropy { logits, label } => {
                    let (logits, label) = (*logits, *label);
                    let v = &self.nodes[logits.0].value;
                    let max = v.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = v.data.iter().map(|x| (x - max).exp()).collect();
                    let sum: f64 = exps.iter().sum();
                    let g = grad.data[0];
                    let mut da = Tensor::zeros(1, v.cols);
                    for c in 0..v.cols {
                        let soft = exps[c] / sum;
                        da.data[c] = g * (soft - if c == label { 1.0 } else { 0.0 });
                    }
                    self.accumulate(logits, da);
                }
                Op::Mse { pred, target } => {
                    let pred = *pred;
                    let target = target.clone();
                    let v = &self.nodes[pred.0].value;
                    let n = v.data.len() as f64;
                    let g = grad.data[0];
                    let mut da = Tensor::zeros(v.rows, v.cols);
                    for (d, (a, b)) in da.data.iter_mut().zip(v.data.iter().zip(&target.data)) {
                        *d = g * 2.0 * (a - b) / n;
                    }
                    self.accumulate(pred, da);
                }
            }
        }
        Ok(())
    }
}

/// Central-difference gradient verification.
///
/// `f` evaluates the loss and its analytic gradients at a parameter setting.
/// Returns the maximum relative error |analytic - fd| / (|analytic| + |fd| + 1e-12)
/// over all coordinates (or `max_coords` randomly sampled ones).
pub fn gradient_check<F>(
    f: &mut F,
    params: &[Tensor],
    delta: f64,
    max_coords: Option<usize>,
    seed: u64,
) -> Result<f64>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    let (_, analytic) = f(params)?;
    let mut coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| (0..p.data().len()).map(move |ci| (pi, ci)))
        .collect();
    if let Some(k) = max_coords {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..coords.len()).rev() {
            coords.swap(i, rng.gen_range(0..=i));
        }
        coords.truncate(k);
    }

    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_err = 0.0f64;
    for (pi, ci) in coords {
        let orig = work[pi].data()[ci];
        work[pi].data_mut()[ci] = orig + delta;
        let (loss_plus, _) = f(&work)?;
        work[pi].data_mut()[ci] = orig - delta;
        let (loss_minus, _) = f(&work)?;
        work[pi].data_mut()[ci] = orig;

        let fd = (loss_plus - loss_minus) / (2.0 * delta);
        let an = analytic[pi].data()[ci];
        let err = (an - fd).abs() / (an.abs() + fd.abs() + 1e-12);
        max_err = max_err.max(err);
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn relu_forward_and_mask() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(1, 2, vec![-1.0, 2.0]).unwrap());
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 2.0]);
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).data(), &[0.0, 1.0]);
    }

    #[test]
    fn softmax_equal_logits_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(1, 3, vec![0.7, 0.7, 0.7]).unwrap());
        let y = tape.softmax_rows(x).unwrap();
        for &v in tape.value(y).data() {
            assert_relative_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn global_max_pool_routes_gradient_to_argmax() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(2, 2, vec![1.0, 5.0, 3.0, 2.0]).unwrap());
        let y = tape.global_max_pool(x).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 5.0]);
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_classes() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(1, 3, vec![0.0, 0.0, 0.0]).unwrap());
        let l = tape.cross_entropy(x, 1).unwrap();
        assert_relative_eq!(tape.value(l).data()[0], 3.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn cross_entropy_large_margin_goes_to_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(1, 3, vec![30.0, 0.0, 0.0]).unwrap());
        let l = tape.cross_entropy(x, 0).unwrap();
        assert!(tape.value(l).data()[0] < 1e-3);
    }

    #[test]
    fn mse_of_identical_tensors_is_zero_with_zero_grad() {
        let mut tape = Tape::new();
        let t = Tensor::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        let x = tape.leaf(t.clone());
        let l = tape.mse(x, &t).unwrap();
        assert_eq!(tape.value(l).data()[0], 0.0);
        tape.backward(l).unwrap();
        assert_eq!(tape.grad(x).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn dropout_eval_mode_and_p_zero_are_identity() {
        let t = Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut tape = Tape::new();
        let x = tape.leaf(t.clone());
        let eval = tape.dropout(x, 0.5, false, 7).unwrap();
        assert_eq!(tape.value(eval), &t);
        let p0 = tape.dropout(x, 0.0, true, 7).unwrap();
        assert_eq!(tape.value(p0), &t);
    }

    #[test]
    fn dropout_is_deterministic_given_seed() {
        let t = Tensor::from_vec(4, 4, (0..16).map(|i| i as f64).collect()).unwrap();
        let run = |seed| {
            let mut tape = Tape::new();
            let x = tape.leaf(t.clone());
            let y = tape.dropout(x, 0.5, true, seed).unwrap();
            tape.value(y).clone()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn matmul_shape_mismatch_is_rejected() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(2, 3));
        let b = tape.leaf(Tensor::zeros(2, 3));
        assert!(matches!(tape.matmul(a, b), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn non_finite_forward_is_rejected() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(1, 1, vec![1e308]).unwrap());
        let b = tape.leaf(Tensor::from_vec(1, 1, vec![1e308]).unwrap());
        assert!(matches!(tape.add(a, b), Err(TensorError::NonFiniteValue { .. })));
    }

    #[test]
    fn gradcheck_linear_map() {
        let x = Tensor::from_vec(2, 3, vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.75]).unwrap();
        let w0 = Tensor::from_vec(3, 2, vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6]).unwrap();
        let mut f = |params: &[Tensor]| {
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone());
            let wv = tape.leaf(params[0].clone());
            let y = tape.matmul(xv, wv)?;
            let loss = tape.sum(y)?;
            tape.backward(loss)?;
            Ok((tape.value(loss).data()[0], vec![tape.grad(wv)]))
        };
        let err = gradient_check(&mut f, &[w0], 1e-5, None, 0).unwrap();
        assert!(err < 1e-7, "relative error {err}");
    }

    #[test]
    fn gradcheck_two_layer_tanh_mlp() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Tensor::glorot_uniform(3, 4, &mut rng);
        let w1 = Tensor::glorot_uniform(4, 5, &mut rng);
        let b1 = Tensor::glorot_uniform(1, 5, &mut rng);
        let w2 = Tensor::glorot_uniform(5, 2, &mut rng);
        let mut f = |params: &[Tensor]| {
            let mut tape = Tape::new();
            let xv = tape.leaf(x.clone());
            let w1v = tape.leaf(params[0].clone());
            let b1v = tape.leaf(params[1].clone());
            let w2v = tape.leaf(params[2].clone());
            let h = tape.matmul(xv, w1v)?;
            let h = tape.add(h, b1v)?;
            let h = tape.tanh(h)?;
            let y = tape.matmul(h, w2v)?;
            let loss = tape.mse(y, &Tensor::filled(3, 2, 0.25))?;
            tape.backward(loss)?;
            Ok((
                tape.value(loss).data()[0],
                vec![tape.grad(w1v), tape.grad(b1v), tape.grad(w2v)],
            ))
        };
        let err = gradient_check(&mut f, &[w1, b1, w2], 1e-5, None, 0).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn gradcheck_attention_style_composite() {
        // softmax over concatenated scalar logits, then scalar-weighted blend
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z1 = Tensor::glorot_uniform(1, 4, &mut rng);
        let z2 = Tensor::glorot_uniform(1, 4, &mut rng);
        let xi = Tensor::glorot_uniform(4, 4, &mut rng);
        let ups = Tensor::glorot_uniform(4, 1, &mut rng);
        let mut f = |params: &[Tensor]| {
            let mut tape = Tape::new();
            let z1v = tape.leaf(z1.clone());
            let z2v = tape.leaf(z2.clone());
            let xiv = tape.leaf(params[0].clone());
            let upsv = tape.leaf(params[1].clone());
            let mut logits = Vec::new();
            for z in [z1v, z2v] {
                let h = tape.matmul(z, xiv)?;
                let h = tape.tanh(h)?;
                logits.push(tape.matmul(h, upsv)?);
            }
            let stacked = tape.concat_cols(logits[0], logits[1])?;
            let alpha = tape.softmax_rows(stacked)?;
            let a0 = tape.slice_cols(alpha, 0, 1)?;
            let a1 = tape.slice_cols(alpha, 1, 1)?;
            let t0 = tape.mul_scalar(z1v, a0)?;
            let t1 = tape.mul_scalar(z2v, a1)?;
            let blended = tape.add(t0, t1)?;
            let loss = tape.mse(blended, &Tensor::filled(1, 4, 0.1))?;
            tape.backward(loss)?;
            Ok((tape.value(loss).data()[0], vec![tape.grad(xiv), tape.grad(upsv)]))
        };
        let err = gradient_check(&mut f, &[xi, ups], 1e-5, None, 0).unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_rows_are_distributions(
                vals in proptest::collection::vec(-30.0..30.0f64, 12)
            ) {
                let mut tape = Tape::new();
                let x = tape.leaf(Tensor::from_vec(3, 4, vals).unwrap());
                let y = tape.softmax_rows(x).unwrap();
                let v = tape.value(y);
                for r in 0..3 {
                    let row = v.row(r);
                    prop_assert!(row.iter().all(|&p| p >= 0.0));
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }

            #[test]
            fn transpose_involution(vals in proptest::collection::vec(-5.0..5.0f64, 6)) {
                let t = Tensor::from_vec(2, 3, vals).unwrap();
                prop_assert_eq!(t.transposed().transposed(), t);
            }
        }
    }
}
