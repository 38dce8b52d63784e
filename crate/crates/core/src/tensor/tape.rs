use std::ops::Range;

use rand::Rng;

use super::{gemm, Scalar, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    AddBias(Var, Var),
    Relu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    LayerNormBias(Var, Var),
    Dropout(Var, Vec<T>),
    ConcatCols(Var, Var),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    SegmentMean(Var, Vec<usize>),
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Single-threaded recording context. Values are immutable once recorded;
/// [`Tape::backward`] consumes the tape and replays it in reverse order.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

fn mismatch<T>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape.clone(),
        right: b.shape.clone(),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant input; no gradient is produced for it.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a trainable leaf whose gradient [`Tape::backward`] returns.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, var: Var) -> &Tensor<T> {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn record(
        &mut self,
        op_name: &'static str,
        value: Tensor<T>,
        op: Op<T>,
        inputs: &[Var],
    ) -> Result<Var, TensorError> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        Ok(self.push(value, op, needs_grad))
    }

    fn check(&self, var: Var) -> Result<(), TensorError> {
        if var.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(TensorError::UnknownVar(var.0))
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape.len() != 2 || bv.shape.len() != 2 || av.shape[1] != bv.shape[0] {
            return Err(mismatch("matmul", av, bv));
        }
        let out = av.matmul(bv)?;
        self.record("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape != bv.shape {
            return Err(mismatch("add", av, bv));
        }
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| *x + *y).collect();
        let out = Tensor::from_parts(av.shape.clone(), data);
        self.record("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape != bv.shape {
            return Err(mismatch("mul", av, bv));
        }
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| *x * *y).collect();
        let out = Tensor::from_parts(av.shape.clone(), data);
        self.record("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var, TensorError> {
        self.check(x)?;
        let xv = self.value(x);
        let out = Tensor::from_parts(xv.shape.clone(), xv.data.iter().map(|v| *v * factor).collect());
        self.record("scale", out, Op::Scale(x, factor), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        self.check(x)?;
        let total = self.value(x).data.iter().copied().sum();
        self.record("sum", Tensor::scalar(total), Op::Sum(x), &[x])
    }

    /// Adds a `[cols]` bias to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        self.check(x)?;
        self.check(bias)?;
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.shape.len() != 1 || bv.shape[0] != xv.cols() {
            return Err(mismatch("add_bias", xv, bv));
        }
        let cols = xv.cols();
        let mut data = xv.data.clone();
        for row in data.chunks_mut(cols) {
            for (v, b) in row.iter_mut().zip(&bv.data) {
                *v += *b;
            }
        }
        let out = Tensor::from_parts(xv.shape.clone(), data);
        self.record("add_bias", out, Op::AddBias(x, bias), &[x, bias])
    }

    /// `x·w + b` for `x: [r×in]`, `w: [in×out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var, TensorError> {
        let xw = self.matmul(x, weight)?;
        self.add_bias(xw, bias)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.check(x)?;
        let xv = self.value(x);
        let data = xv
            .data
            .iter()
            .map(|v| if *v > T::zero() { *v } else { T::zero() })
            .collect();
        let out = Tensor::from_parts(xv.shape.clone(), data);
        self.record("relu", out, Op::Relu(x), &[x])
    }

    /// Normalises each row over its last axis, then applies `gain` and `bias`.
    /// Variance is the population variance.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var, TensorError> {
        self.check(x)?;
        self.check(gain)?;
        self.check(bias)?;
        if !(eps > T::zero()) {
            return Err(TensorError::InvalidParameter(format!(
                "layer_norm eps must be positive, got {eps}"
            )));
        }
        let xv = self.value(x);
        let d = xv.cols();
        for p in [gain, bias] {
            let pv = self.value(p);
            if pv.shape.len() != 1 || pv.shape[0] != d {
                return Err(mismatch("layer_norm", xv, pv));
            }
        }
        let gv = &self.value(gain).data;
        let inv_d = T::one() / T::of(d as f64);
        let rows = xv.rows();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut inv_std = vec![T::zero(); rows];
        let mut scaled = vec![T::zero(); xv.len()];
        for r in 0..rows {
            let row = &xv.data[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() * inv_d;
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            for c in 0..d {
                let h = (row[c] - mean) * is;
                xhat[r * d + c] = h;
                scaled[r * d + c] = h * gv[c];
            }
        }
        let normed = Tensor::from_parts(xv.shape.clone(), scaled);
        let normed = self.record(
            "layer_norm",
            normed,
            Op::LayerNorm { x, gain, xhat, inv_std },
            &[x, gain],
        )?;
        // Bias is a separate node so the normalisation node keeps a single
        // upstream gradient.
        let nv = self.value(normed);
        let bv = self.value(bias);
        let mut data = nv.data.clone();
        for row in data.chunks_mut(d) {
            for (v, b) in row.iter_mut().zip(&bv.data) {
                *v += *b;
            }
        }
        let out = Tensor::from_parts(nv.shape.clone(), data);
        self.record("layer_norm", out, Op::LayerNormBias(normed, bias), &[normed, bias])
    }

    /// Inverted dropout: survivors are scaled by `1/(1−rate)` during training;
    /// outside training (or at rate 0) this is the identity and records nothing.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var, TensorError> {
        self.check(x)?;
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::InvalidParameter(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let xv = self.value(x);
        let mask: Vec<T> = (0..xv.len())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let data = xv.data.iter().zip(&mask).map(|(v, m)| *v * *m).collect();
        let out = Tensor::from_parts(xv.shape.clone(), data);
        self.record("dropout", out, Op::Dropout(x, mask), &[x])
    }

    /// Row-wise concatenation `[a ‖ b]` of two matrices with equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.check(a)?;
        self.check(b)?;
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape.len() != 2 || bv.shape.len() != 2 || av.rows() != bv.rows() {
            return Err(mismatch("concat_cols", av, bv));
        }
        let (ca, cb) = (av.cols(), bv.cols());
        let mut data = Vec::with_capacity(av.len() + bv.len());
        for r in 0..av.rows() {
            data.extend_from_slice(&av.data[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&bv.data[r * cb..(r + 1) * cb]);
        }
        let out = Tensor::from_parts(vec![av.rows(), ca + cb], data);
        self.record("concat_cols", out, Op::ConcatCols(a, b), &[a, b])
    }

    pub fn slice_rows(&mut self, x: Var, range: Range<usize>) -> Result<Var, TensorError> {
        self.check(x)?;
        let xv = self.value(x);
        if xv.shape.len() != 2 || range.start >= range.end || range.end > xv.rows() {
            return Err(TensorError::InvalidParameter(format!(
                "row slice {range:?} out of bounds for shape {:?}",
                xv.shape
            )));
        }
        let c = xv.cols();
        let data = xv.data[range.start * c..range.end * c].to_vec();
        let out = Tensor::from_parts(vec![range.len(), c], data);
        self.record("slice_rows", out, Op::SliceRows(x, range.start), &[x])
    }

    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var, TensorError> {
        self.check(x)?;
        let xv = self.value(x);
        if xv.shape.len() != 2 || index.is_empty() {
            return Err(TensorError::InvalidParameter(
                "gather_rows needs a matrix and indices".into(),
            ));
        }
        let (rows, c) = (xv.rows(), xv.cols());
        let mut data = Vec::with_capacity(index.len() * c);
        for &i in index {
            if i >= rows {
                return Err(TensorError::InvalidParameter(format!(
                    "gather index {i} out of bounds for {rows} rows"
                )));
            }
            data.extend_from_slice(&xv.data[i * c..(i + 1) * c]);
        }
        let out = Tensor::from_parts(vec![index.len(), c], data);
        self.record("gather_rows", out, Op::GatherRows(x, index.to_vec()), &[x])
    }

    /// Mean over contiguous row groups. `offsets` has one more entry than there
    /// are groups; group `g` spans rows `offsets[g]..offsets[g+1]`. Rows are
    /// summed in ascending order.
    pub fn segment_mean(&mut self, x: Var, offsets: &[usize]) -> Result<Var, TensorError> {
        self.check(x)?;
        let xv = self.value(x);
        let valid = xv.shape.len() == 2
            && offsets.len() >= 2
            && offsets[0] == 0
            && *offsets.last().unwrap() == xv.rows()
            && offsets.windows(2).all(|w| w[0] < w[1]);
        if !valid {
            return Err(TensorError::InvalidParameter(format!(
                "segment offsets {offsets:?} do not partition {} rows",
                xv.shape[0]
            )));
        }
        let c = xv.cols();
        let groups = offsets.len() - 1;
        let mut data = vec![T::zero(); groups * c];
        for g in 0..groups {
            let out = &mut data[g * c..(g + 1) * c];
            for r in offsets[g]..offsets[g + 1] {
                for (o, v) in out.iter_mut().zip(&xv.data[r * c..(r + 1) * c]) {
                    *o += *v;
                }
            }
            let inv = T::one() / T::of((offsets[g + 1] - offsets[g]) as f64);
            for o in out.iter_mut() {
                *o *= inv;
            }
        }
        let out = Tensor::from_parts(vec![groups, c], data);
        self.record("segment_mean", out, Op::SegmentMean(x, offsets.to_vec()), &[x])
    }

    /// Mean softmax cross-entropy over the rows of `logits`. Returns the scalar
    /// loss and the row-wise class probabilities.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<(Var, Tensor<T>), TensorError> {
        self.check(logits)?;
        let lv = self.value(logits);
        let (rows, c) = (lv.rows(), lv.cols());
        if rows != labels.len() || labels.iter().any(|&l| l >= c) {
            return Err(TensorError::InvalidParameter(format!(
                "{} labels (max class {}) for logits of shape {:?}",
                labels.len(),
                c - 1,
                lv.shape
            )));
        }
        if !lv.is_finite() {
            return Err(TensorError::NonFinite {
                op: "softmax_cross_entropy",
            });
        }
        let mut probs = vec![T::zero(); rows * c];
        let mut total = T::zero();
        for r in 0..rows {
            let row = &lv.data[r * c..(r + 1) * c];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for (p, v) in probs[r * c..(r + 1) * c].iter_mut().zip(row) {
                *p = (*v - max).exp();
                z += *p;
            }
            for p in probs[r * c..(r + 1) * c].iter_mut() {
                *p = *p / z;
            }
            // log-sum-exp form keeps the loss accurate when the label
            // probability underflows.
            total += z.ln() - (row[labels[r]] - max);
        }
        let loss = total / T::of(rows as f64);
        let probs_t = Tensor::from_parts(lv.shape.clone(), probs.clone());
        let var = self.record(
            "softmax_cross_entropy",
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            &[logits],
        )?;
        Ok((var, probs_t))
    }

    /// Reverse pass from a scalar `loss`. Visits recorded ops in exact reverse
    /// order and accumulates gradients additively into shared inputs.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>, TensorError> {
        self.check(loss)?;
        let shape = self.nodes[loss.0].value.shape.clone();
        if self.nodes[loss.0].value.len() != 1 {
            return Err(TensorError::NonScalarLoss(shape));
        }
        let mut nodes = self.nodes;
        nodes.truncate(loss.0 + 1);
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(&shape, T::one()));

        for i in (0..nodes.len()).rev() {
            let Some(grad) = grads[i].take() else { continue };
            let node = &nodes[i];
            if !node.needs_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                grads[i] = Some(grad);
                continue;
            }
            let contributions = backprop(&nodes, node, grad);
            for (var, g) in contributions {
                if !nodes[var.0].needs_grad {
                    continue;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        // Only leaves keep their gradients.
        for (slot, node) in grads.iter_mut().zip(&nodes) {
            if !matches!(node.op, Op::Leaf) {
                *slot = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn needs<T>(nodes: &[Node<T>], v: Var) -> bool {
    nodes[v.0].needs_grad
}

fn backprop<T: Scalar>(nodes: &[Node<T>], node: &Node<T>, grad: Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let val = |v: Var| &nodes[v.0].value;
    let mut out = Vec::with_capacity(2);
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let (m, k, n) = (av.shape[0], av.shape[1], bv.shape[1]);
            if needs(nodes, *a) {
                let mut da = vec![T::zero(); m * k];
                gemm(m, n, k, &grad.data, false, &bv.data, true, T::zero(), &mut da);
                out.push((*a, Tensor::from_parts(av.shape.clone(), da)));
            }
            if needs(nodes, *b) {
                let mut db = vec![T::zero(); k * n];
                gemm(k, m, n, &av.data, true, &grad.data, false, T::zero(), &mut db);
                out.push((*b, Tensor::from_parts(bv.shape.clone(), db)));
            }
        }
        Op::Add(a, b) => {
            out.push((*a, grad.clone()));
            out.push((*b, grad));
        }
        Op::Mul(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let da = grad.data.iter().zip(&bv.data).map(|(g, y)| *g * *y).collect();
            let db = grad.data.iter().zip(&av.data).map(|(g, x)| *g * *x).collect();
            out.push((*a, Tensor::from_parts(av.shape.clone(), da)));
            out.push((*b, Tensor::from_parts(bv.shape.clone(), db)));
        }
        Op::Scale(x, factor) => {
            let data = grad.data.iter().map(|g| *g * *factor).collect();
            out.push((*x, Tensor::from_parts(grad.shape.clone(), data)));
        }
        Op::Sum(x) => {
            out.push((*x, Tensor::full(&val(*x).shape, grad.data[0])));
        }
        Op::AddBias(x, bias) | Op::LayerNormBias(x, bias) => {
            if needs(nodes, *bias) {
                out.push((*bias, column_sums(&grad)));
            }
            out.push((*x, grad));
        }
        Op::Relu(x) => {
            let data = grad
                .data
                .iter()
                .zip(&node.value.data)
                .map(|(g, y)| if *y > T::zero() { *g } else { T::zero() })
                .collect();
            out.push((*x, Tensor::from_parts(grad.shape.clone(), data)));
        }
        Op::LayerNorm { x, gain, xhat, inv_std } => {
            let d = grad.cols();
            let rows = grad.rows();
            let gv = &val(*gain).data;
            if needs(nodes, *gain) {
                let mut dgain = vec![T::zero(); d];
                for r in 0..rows {
                    for c in 0..d {
                        dgain[c] += grad.data[r * d + c] * xhat[r * d + c];
                    }
                }
                out.push((*gain, Tensor::vector(dgain)));
            }
            if needs(nodes, *x) {
                let inv_d = T::one() / T::of(d as f64);
                let mut dx = vec![T::zero(); grad.len()];
                for r in 0..rows {
                    let g = &grad.data[r * d..(r + 1) * d];
                    let h = &xhat[r * d..(r + 1) * d];
                    let mut mean_dh = T::zero();
                    let mut mean_dh_h = T::zero();
                    for c in 0..d {
                        let dh = g[c] * gv[c];
                        mean_dh += dh;
                        mean_dh_h += dh * h[c];
                    }
                    mean_dh *= inv_d;
                    mean_dh_h *= inv_d;
                    for c in 0..d {
                        let dh = g[c] * gv[c];
                        dx[r * d + c] = inv_std[r] * (dh - mean_dh - h[c] * mean_dh_h);
                    }
                }
                out.push((*x, Tensor::from_parts(grad.shape.clone(), dx)));
            }
        }
        Op::Dropout(x, mask) => {
            let data = grad.data.iter().zip(mask).map(|(g, m)| *g * *m).collect();
            out.push((*x, Tensor::from_parts(grad.shape.clone(), data)));
        }
        Op::ConcatCols(a, b) => {
            let (ca, cb) = (val(*a).cols(), val(*b).cols());
            let rows = grad.rows();
            let mut da = Vec::with_capacity(rows * ca);
            let mut db = Vec::with_capacity(rows * cb);
            for r in 0..rows {
                let row = &grad.data[r * (ca + cb)..(r + 1) * (ca + cb)];
                da.extend_from_slice(&row[..ca]);
                db.extend_from_slice(&row[ca..]);
            }
            out.push((*a, Tensor::from_parts(vec![rows, ca], da)));
            out.push((*b, Tensor::from_parts(vec![rows, cb], db)));
        }
        Op::SliceRows(x, start) => {
            let xv = val(*x);
            let c = xv.cols();
            let mut dx = vec![T::zero(); xv.len()];
            dx[start * c..start * c + grad.len()].copy_from_slice(&grad.data);
            out.push((*x, Tensor::from_parts(xv.shape.clone(), dx)));
        }
        Op::GatherRows(x, index) => {
            let xv = val(*x);
            let c = xv.cols();
            let mut dx = vec![T::zero(); xv.len()];
            for (k, &i) in index.iter().enumerate() {
                for (d, g) in dx[i * c..(i + 1) * c].iter_mut().zip(&grad.data[k * c..(k + 1) * c]) {
                    *d += *g;
                }
            }
            out.push((*x, Tensor::from_parts(xv.shape.clone(), dx)));
        }
        Op::SegmentMean(x, offsets) => {
            let xv = val(*x);
            let c = xv.cols();
            let mut dx = vec![T::zero(); xv.len()];
            for g in 0..offsets.len() - 1 {
                let inv = T::one() / T::of((offsets[g + 1] - offsets[g]) as f64);
                let src = &grad.data[g * c..(g + 1) * c];
                for r in offsets[g]..offsets[g + 1] {
                    for (d, s) in dx[r * c..(r + 1) * c].iter_mut().zip(src) {
                        *d = *s * inv;
                    }
                }
            }
            out.push((*x, Tensor::from_parts(xv.shape.clone(), dx)));
        }
        Op::SoftmaxCrossEntropy { logits, labels, probs } => {
            let lv = val(*logits);
            let c = lv.cols();
            let scale = grad.data[0] / T::of(labels.len() as f64);
            let mut dl = probs.clone();
            for (r, &y) in labels.iter().enumerate() {
                dl[r * c + y] -= T::one();
            }
            for v in dl.iter_mut() {
                *v *= scale;
            }
            out.push((*logits, Tensor::from_parts(lv.shape.clone(), dl)));
        }
    }
    out
}

fn column_sums<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    let c = t.cols();
    let mut sums = vec![T::zero(); c];
    for row in t.data.chunks(c) {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += *v;
        }
    }
    Tensor::vector(sums)
}
