//! Eager reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records every operation as it is evaluated. Each node owns its
//! forward value; [`Tape::backward`] walks the record in reverse and
//! accumulates adjoints for every node that can influence the scalar root.
//! Tapes are built per step and dropped afterwards, so no graph reuse or
//! checkpointing machinery is needed.

use crate::error::{Error, Result};
use crate::numkit::dense::DenseMatrix;
use crate::numkit::sparse::SparseSymmetric;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

/// Running statistics for one batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BnState {
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
}

impl BnState {
    pub fn new(dim: usize, momentum: f64) -> Self {
        BnState {
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum,
        }
    }
}

/// Variance floor used when normalizing batches and running statistics.
pub const BN_VAR_FLOOR: f64 = 1e-5;

#[derive(Clone, Debug)]
struct BnSaved {
    x_hat: DenseMatrix,
    inv_std: Vec<f64>,
    floored: Vec<bool>,
    batch_stats: bool,
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Var,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    MatMul(NodeId, NodeId),
    Spmm(SparseSymmetric, NodeId),
    Transpose(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    RowSum(NodeId),
    RowNorms { x: NodeId, floor: f64 },
    Recip(NodeId),
    RsqrtFloor { x: NodeId, floor: f64 },
    RowScale { x: NodeId, s: NodeId },
    ColScale { x: NodeId, s: NodeId },
    AddRowBroadcast { x: NodeId, b: NodeId },
    HConcat(NodeId, NodeId),
    LogSumExpRows { x: NodeId, mask: DenseMatrix },
    DiagPart(NodeId),
    Sum(NodeId),
    SegmentMean { x: NodeId, segments: Vec<usize>, counts: Vec<usize> },
    BatchNorm { x: NodeId, gamma: NodeId, beta: NodeId, saved: Box<BnSaved> },
}

struct Node {
    op: Op,
    value: DenseMatrix,
    requires_grad: bool,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`NodeId`].
pub struct GradientMap {
    grads: Vec<Option<DenseMatrix>>,
}

impl GradientMap {
    /// Gradient of the root with respect to the given node, when one was
    /// accumulated (constants and unreachable nodes have none).
    pub fn get(&self, id: NodeId) -> Option<&DenseMatrix> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a node that is known to participate in the loss.
    pub fn expect(&self, id: NodeId) -> Result<&DenseMatrix> {
        self.get(id)
            .ok_or_else(|| Error::Numeric("no gradient accumulated for node".into()))
    }
}

/// Operation record plus forward values; see the module docs.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.nodes[id.0].value
    }

    /// Value of a 1x1 node as a plain scalar.
    pub fn scalar(&self, id: NodeId) -> Result<f64> {
        let v = self.value(id);
        if v.shape() != (1, 1) {
            return Err(Error::Dimension(format!(
                "expected 1x1 scalar node, got {}x{}",
                v.rows(),
                v.cols()
            )));
        }
        Ok(v.at(0, 0))
    }

    fn push(&mut self, op: Op, value: DenseMatrix, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { op, value, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Leaf with no gradient tracking.
    pub fn constant(&mut self, value: DenseMatrix) -> NodeId {
        self.push(Op::Constant, value, false)
    }

    /// Leaf that accumulates a gradient during [`Tape::backward`].
    pub fn var(&mut self, value: DenseMatrix) -> NodeId {
        self.push(Op::Var, value, true)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(Op::Add(a, b), value, rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).sub(self.value(b))?;
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(Op::Sub(a, b), value, rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).hadamard(self.value(b))?;
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(Op::Mul(a, b), value, rg))
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let value = self.value(a).scale(k);
        let rg = self.needs_grad(a);
        self.push(Op::Scale(a, k), value, rg)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(Op::MatMul(a, b), value, rg))
    }

    /// Sparse-symmetric times dense; the sparse factor is a constant.
    pub fn spmm(&mut self, s: &SparseSymmetric, b: NodeId) -> Result<NodeId> {
        let value = s.spmm(self.value(b))?;
        let rg = self.needs_grad(b);
        Ok(self.push(Op::Spmm(s.clone(), b), value, rg))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transpose();
        let rg = self.needs_grad(a);
        self.push(Op::Transpose(a), value, rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|v| v.max(0.0));
        let rg = self.needs_grad(a);
        self.push(Op::Relu(a), value, rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|v| {
            if v >= 0.0 {
                1.0 / (1.0 + (-v).exp())
            } else {
                let e = v.exp();
                e / (1.0 + e)
            }
        });
        let rg = self.needs_grad(a);
        self.push(Op::Sigmoid(a), value, rg)
    }

    /// Column vector of row sums.
    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let mut value = DenseMatrix::zeros(va.rows(), 1);
        for i in 0..va.rows() {
            value.set(i, 0, va.row(i).iter().sum());
        }
        let rg = self.needs_grad(a);
        self.push(Op::RowSum(a), value, rg)
    }

    /// Column vector of Euclidean row norms, floored away from zero.
    pub fn row_norms(&mut self, x: NodeId, floor: f64) -> NodeId {
        let vx = self.value(x);
        let mut value = DenseMatrix::zeros(vx.rows(), 1);
        for i in 0..vx.rows() {
            let norm = vx.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            value.set(i, 0, norm.max(floor));
        }
        let rg = self.needs_grad(x);
        self.push(Op::RowNorms { x, floor }, value, rg)
    }

    /// Elementwise reciprocal.
    pub fn recip(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|v| 1.0 / v);
        let rg = self.needs_grad(a);
        self.push(Op::Recip(a), value, rg)
    }

    /// Elementwise `max(x, floor)^(-1/2)`.
    pub fn rsqrt_floor(&mut self, x: NodeId, floor: f64) -> NodeId {
        let value = self.value(x).map(|v| 1.0 / v.max(floor).sqrt());
        let rg = self.needs_grad(x);
        self.push(Op::RsqrtFloor { x, floor }, value, rg)
    }

    /// Scales row `i` of `x` by `s[i]`; `s` must be a column vector.
    pub fn row_scale(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let (vx, vs) = (self.value(x), self.value(s));
        if vs.shape() != (vx.rows(), 1) {
            return Err(Error::Dimension("row_scale: scale must be rows-by-1".into()));
        }
        let mut value = vx.clone();
        for i in 0..value.rows() {
            let k = vs.at(i, 0);
            for v in value.row_mut(i) {
                *v *= k;
            }
        }
        let rg = self.needs_grad(x) || self.needs_grad(s);
        Ok(self.push(Op::RowScale { x, s }, value, rg))
    }

    /// Scales column `j` of `x` by `s[j]`; `s` must be a column vector.
    pub fn col_scale(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let (vx, vs) = (self.value(x), self.value(s));
        if vs.shape() != (vx.cols(), 1) {
            return Err(Error::Dimension("col_scale: scale must be cols-by-1".into()));
        }
        let mut value = vx.clone();
        for i in 0..value.rows() {
            for (j, v) in value.row_mut(i).iter_mut().enumerate() {
                *v *= vs.at(j, 0);
            }
        }
        let rg = self.needs_grad(x) || self.needs_grad(s);
        Ok(self.push(Op::ColScale { x, s }, value, rg))
    }

    /// Adds a 1-by-d row vector to every row of `x` (bias broadcast).
    pub fn add_row_broadcast(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (vx, vb) = (self.value(x), self.value(b));
        if vb.shape() != (1, vx.cols()) {
            return Err(Error::Dimension("add_row_broadcast: bias must be 1-by-cols".into()));
        }
        let mut value = vx.clone();
        for i in 0..value.rows() {
            for (j, v) in value.row_mut(i).iter_mut().enumerate() {
                *v += vb.at(0, j);
            }
        }
        let rg = self.needs_grad(x) || self.needs_grad(b);
        Ok(self.push(Op::AddRowBroadcast { x, b }, value, rg))
    }

    /// Concatenates two matrices with equal row counts along columns.
    pub fn hconcat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(Error::Dimension("hconcat: row counts differ".into()));
        }
        let mut value = DenseMatrix::zeros(va.rows(), va.cols() + vb.cols());
        for i in 0..va.rows() {
            let row = value.row_mut(i);
            row[..va.cols()].copy_from_slice(va.row(i));
            row[va.cols()..].copy_from_slice(vb.row(i));
        }
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(Op::HConcat(a, b), value, rg))
    }

    /// Row-wise `log(sum_j mask[i][j] * exp(x[i][j]))` with the max trick.
    /// `mask` entries must be 0 or 1 and every row needs at least one kept
    /// entry.
    pub fn logsumexp_rows(&mut self, x: NodeId, mask: DenseMatrix) -> Result<NodeId> {
        let vx = self.value(x);
        if mask.shape() != vx.shape() {
            return Err(Error::Dimension("logsumexp_rows: mask shape mismatch".into()));
        }
        let mut value = DenseMatrix::zeros(vx.rows(), 1);
        for i in 0..vx.rows() {
            let mut m = f64::NEG_INFINITY;
            for (j, &v) in vx.row(i).iter().enumerate() {
                if mask.at(i, j) != 0.0 {
                    m = m.max(v);
                }
            }
            if m == f64::NEG_INFINITY {
                return Err(Error::Validation(format!(
                    "logsumexp_rows: row {i} has no unmasked entries"
                )));
            }
            let mut acc = 0.0;
            for (j, &v) in vx.row(i).iter().enumerate() {
                if mask.at(i, j) != 0.0 {
                    acc += (v - m).exp();
                }
            }
            value.set(i, 0, m + acc.ln());
        }
        let rg = self.needs_grad(x);
        Ok(self.push(Op::LogSumExpRows { x, mask }, value, rg))
    }

    /// Main diagonal of a square matrix as a column vector.
    pub fn diag_part(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        if va.rows() != va.cols() {
            return Err(Error::Dimension("diag_part: matrix is not square".into()));
        }
        let mut value = DenseMatrix::zeros(va.rows(), 1);
        for i in 0..va.rows() {
            value.set(i, 0, va.at(i, i));
        }
        let rg = self.needs_grad(a);
        Ok(self.push(Op::DiagPart(a), value, rg))
    }

    /// Sum of all entries as a 1x1 node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = DenseMatrix::from_vec(1, 1, vec![self.value(a).sum()])
            .unwrap_or_else(|_| DenseMatrix::filled(1, 1, f64::NAN));
        let rg = self.needs_grad(a);
        self.push(Op::Sum(a), value, rg)
    }

    /// Mean of rows grouped by segment id; output has one row per segment.
    /// Every segment in `0..num_segments` must receive at least one row.
    pub fn segment_mean(
        &mut self,
        x: NodeId,
        segments: &[usize],
        num_segments: usize,
    ) -> Result<NodeId> {
        let vx = self.value(x);
        if segments.len() != vx.rows() {
            return Err(Error::Dimension("segment_mean: one segment id per row required".into()));
        }
        let mut counts = vec![0usize; num_segments];
        for &s in segments {
            if s >= num_segments {
                return Err(Error::Validation(format!("segment id {s} out of range")));
            }
            counts[s] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::DegenerateBatch(format!("segment {empty} has no rows")));
        }
        let mut value = DenseMatrix::zeros(num_segments, vx.cols());
        for (i, &s) in segments.iter().enumerate() {
            for (j, &v) in vx.row(i).iter().enumerate() {
                value.set(s, j, value.at(s, j) + v);
            }
        }
        for s in 0..num_segments {
            let inv = 1.0 / counts[s] as f64;
            for v in value.row_mut(s) {
                *v *= inv;
            }
        }
        let rg = self.needs_grad(x);
        Ok(self.push(
            Op::SegmentMean { x, segments: segments.to_vec(), counts },
            value,
            rg,
        ))
    }

    /// Batch normalization using batch statistics. Normalizes each column to
    /// `(x - mean) / sqrt(max(var, BN_VAR_FLOOR))`, then applies the affine
    /// pair `gamma`, `beta` (both 1-by-d). Running statistics in `state` are
    /// refreshed when `update_running` is set. Requires at least two rows.
    pub fn batch_norm_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        state: &mut BnState,
        update_running: bool,
    ) -> Result<NodeId> {
        let vx = self.value(x);
        let (m, d) = vx.shape();
        if m < 2 {
            return Err(Error::DegenerateBatch(format!(
                "batch norm needs at least 2 rows, got {m}"
            )));
        }
        self.check_bn_affine(gamma, beta, d)?;
        if state.running_mean.len() != d {
            return Err(Error::Dimension("batch norm state dimension mismatch".into()));
        }

        let mut mean = vec![0.0; d];
        for i in 0..m {
            for (j, &v) in vx.row(i).iter().enumerate() {
                mean[j] += v;
            }
        }
        for mj in mean.iter_mut() {
            *mj /= m as f64;
        }
        let mut var = vec![0.0; d];
        for i in 0..m {
            for (j, &v) in vx.row(i).iter().enumerate() {
                let c = v - mean[j];
                var[j] += c * c;
            }
        }
        for vj in var.iter_mut() {
            *vj /= m as f64;
        }

        let floored: Vec<bool> = var.iter().map(|&v| v <= BN_VAR_FLOOR).collect();
        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / v.max(BN_VAR_FLOOR).sqrt()).collect();

        let mut x_hat = DenseMatrix::zeros(m, d);
        for i in 0..m {
            for j in 0..d {
                x_hat.set(i, j, (vx.at(i, j) - mean[j]) * inv_std[j]);
            }
        }

        if update_running {
            let mom = state.momentum;
            for j in 0..d {
                state.running_mean[j] = (1.0 - mom) * state.running_mean[j] + mom * mean[j];
                state.running_var[j] = (1.0 - mom) * state.running_var[j] + mom * var[j];
            }
        }

        let value = self.bn_affine_value(&x_hat, gamma, beta);
        let rg = self.needs_grad(x) || self.needs_grad(gamma) || self.needs_grad(beta);
        Ok(self.push(
            Op::BatchNorm {
                x,
                gamma,
                beta,
                saved: Box::new(BnSaved { x_hat, inv_std, floored, batch_stats: true }),
            },
            value,
            rg,
        ))
    }

    /// Batch normalization using the running statistics in `state`.
    pub fn batch_norm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        state: &BnState,
    ) -> Result<NodeId> {
        let vx = self.value(x);
        let (m, d) = vx.shape();
        self.check_bn_affine(gamma, beta, d)?;
        if state.running_mean.len() != d {
            return Err(Error::Dimension("batch norm state dimension mismatch".into()));
        }
        let inv_std: Vec<f64> = state
            .running_var
            .iter()
            .map(|&v| 1.0 / v.max(BN_VAR_FLOOR).sqrt())
            .collect();
        let floored: Vec<bool> = state.running_var.iter().map(|&v| v <= BN_VAR_FLOOR).collect();
        let mut x_hat = DenseMatrix::zeros(m, d);
        for i in 0..m {
            for j in 0..d {
                x_hat.set(i, j, (vx.at(i, j) - state.running_mean[j]) * inv_std[j]);
            }
        }
        let value = self.bn_affine_value(&x_hat, gamma, beta);
        let rg = self.needs_grad(x) || self.needs_grad(gamma) || self.needs_grad(beta);
        Ok(self.push(
            Op::BatchNorm {
                x,
                gamma,
                beta,
                saved: Box::new(BnSaved { x_hat, inv_std, floored, batch_stats: false }),
            },
            value,
            rg,
        ))
    }

    fn check_bn_affine(&self, gamma: NodeId, beta: NodeId, d: usize) -> Result<()> {
        if self.value(gamma).shape() != (1, d) || self.value(beta).shape() != (1, d) {
            return Err(Error::Dimension("batch norm affine params must be 1-by-d".into()));
        }
        Ok(())
    }

    fn bn_affine_value(&self, x_hat: &DenseMatrix, gamma: NodeId, beta: NodeId) -> DenseMatrix {
        let (vg, vb) = (self.value(gamma), self.value(beta));
        let mut out = x_hat.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = *v * vg.at(0, j) + vb.at(0, j);
            }
        }
        out
    }

    /// Reverse pass from a 1x1 root. Returns the adjoint of every node that
    /// influences the root and tracks gradients.
    pub fn backward(&self, root: NodeId) -> Result<GradientMap> {
        if self.value(root).shape() != (1, 1) {
            return Err(Error::Dimension("backward root must be a 1x1 scalar".into()));
        }
        let mut grads: Vec<Option<DenseMatrix>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[root.0] = Some(DenseMatrix::filled(1, 1, 1.0));

        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.step_backward(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(GradientMap { grads })
    }

    fn accum(&self, grads: &mut [Option<DenseMatrix>], id: NodeId, delta: DenseMatrix) {
        if !self.needs_grad(id) {
            return;
        }
        match &mut grads[id.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn step_backward(&self, idx: usize, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Constant | Op::Var => {}
            Op::Add(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, g.clone());
                self.accum(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.needs_grad(*a) {
                    self.accum(grads, *a, g.hadamard(self.value(*b)).unwrap());
                }
                if self.needs_grad(*b) {
                    self.accum(grads, *b, g.hadamard(self.value(*a)).unwrap());
                }
            }
            Op::Scale(a, k) => self.accum(grads, *a, g.scale(*k)),
            Op::MatMul(a, b) => {
                if self.needs_grad(*a) {
                    let delta = g.matmul(&self.value(*b).transpose()).unwrap();
                    self.accum(grads, *a, delta);
                }
                if self.needs_grad(*b) {
                    let delta = self.value(*a).transpose().matmul(g).unwrap();
                    self.accum(grads, *b, delta);
                }
            }
            Op::Spmm(s, b) => {
                if self.needs_grad(*b) {
                    self.accum(grads, *b, s.spmm(g).unwrap());
                }
            }
            Op::Transpose(a) => self.accum(grads, *a, g.transpose()),
            Op::Relu(a) => {
                let va = self.value(*a);
                let mut delta = g.clone();
                for (d, &v) in delta.values_mut().iter_mut().zip(va.values()) {
                    if v <= 0.0 {
                        *d = 0.0;
                    }
                }
                self.accum(grads, *a, delta);
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                let mut delta = g.clone();
                for (d, &s) in delta.values_mut().iter_mut().zip(y.values()) {
                    *d *= s * (1.0 - s);
                }
                self.accum(grads, *a, delta);
            }
            Op::RowSum(a) => {
                let va = self.value(*a);
                let mut delta = DenseMatrix::zeros(va.rows(), va.cols());
                for i in 0..va.rows() {
                    let gi = g.at(i, 0);
                    for v in delta.row_mut(i) {
                        *v = gi;
                    }
                }
                self.accum(grads, *a, delta);
            }
            Op::RowNorms { x, floor } => {
                let vx = self.value(*x);
                let y = &node.value;
                let mut delta = DenseMatrix::zeros(vx.rows(), vx.cols());
                for i in 0..vx.rows() {
                    if y.at(i, 0) <= *floor {
                        continue;
                    }
                    let k = g.at(i, 0) / y.at(i, 0);
                    for (d, &v) in delta.row_mut(i).iter_mut().zip(vx.row(i)) {
                        *d = k * v;
                    }
                }
                self.accum(grads, *x, delta);
            }
            Op::Recip(a) => {
                let y = &node.value;
                let mut delta = g.clone();
                for (d, &yi) in delta.values_mut().iter_mut().zip(y.values()) {
                    *d *= -yi * yi;
                }
                self.accum(grads, *a, delta);
            }
            Op::RsqrtFloor { x, floor } => {
                let vx = self.value(*x);
                let y = &node.value;
                let mut delta = g.clone();
                for ((d, &v), &yi) in delta.values_mut().iter_mut().zip(vx.values()).zip(y.values())
                {
                    *d = if v > *floor { -0.5 * *d * yi * yi * yi } else { 0.0 };
                }
                self.accum(grads, *x, delta);
            }
            Op::RowScale { x, s } => {
                let (vx, vs) = (self.value(*x), self.value(*s));
                if self.needs_grad(*x) {
                    let mut delta = g.clone();
                    for i in 0..delta.rows() {
                        let k = vs.at(i, 0);
                        for v in delta.row_mut(i) {
                            *v *= k;
                        }
                    }
                    self.accum(grads, *x, delta);
                }
                if self.needs_grad(*s) {
                    let mut delta = DenseMatrix::zeros(vx.rows(), 1);
                    for i in 0..vx.rows() {
                        let dot: f64 = g.row(i).iter().zip(vx.row(i)).map(|(&a, &b)| a * b).sum();
                        delta.set(i, 0, dot);
                    }
                    self.accum(grads, *s, delta);
                }
            }
            Op::ColScale { x, s } => {
                let (vx, vs) = (self.value(*x), self.value(*s));
                if self.needs_grad(*x) {
                    let mut delta = g.clone();
                    for i in 0..delta.rows() {
                        for (j, v) in delta.row_mut(i).iter_mut().enumerate() {
                            *v *= vs.at(j, 0);
                        }
                    }
                    self.accum(grads, *x, delta);
                }
                if self.needs_grad(*s) {
                    let mut delta = DenseMatrix::zeros(vx.cols(), 1);
                    for i in 0..vx.rows() {
                        for (j, (&gv, &xv)) in g.row(i).iter().zip(vx.row(i)).enumerate() {
                            delta.set(j, 0, delta.at(j, 0) + gv * xv);
                        }
                    }
                    self.accum(grads, *s, delta);
                }
            }
            Op::AddRowBroadcast { x, b } => {
                self.accum(grads, *x, g.clone());
                if self.needs_grad(*b) {
                    let mut delta = DenseMatrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (j, &gv) in g.row(i).iter().enumerate() {
                            delta.set(0, j, delta.at(0, j) + gv);
                        }
                    }
                    self.accum(grads, *b, delta);
                }
            }
            Op::HConcat(a, b) => {
                let ca = self.value(*a).cols();
                if self.needs_grad(*a) {
                    let mut delta = DenseMatrix::zeros(g.rows(), ca);
                    for i in 0..g.rows() {
                        delta.row_mut(i).copy_from_slice(&g.row(i)[..ca]);
                    }
                    self.accum(grads, *a, delta);
                }
                if self.needs_grad(*b) {
                    let cb = g.cols() - ca;
                    let mut delta = DenseMatrix::zeros(g.rows(), cb);
                    for i in 0..g.rows() {
                        delta.row_mut(i).copy_from_slice(&g.row(i)[ca..]);
                    }
                    self.accum(grads, *b, delta);
                }
            }
            Op::LogSumExpRows { x, mask } => {
                let vx = self.value(*x);
                let y = &node.value;
                let mut delta = DenseMatrix::zeros(vx.rows(), vx.cols());
                for i in 0..vx.rows() {
                    let gi = g.at(i, 0);
                    let yi = y.at(i, 0);
                    for (j, (d, &v)) in delta.row_mut(i).iter_mut().zip(vx.row(i)).enumerate() {
                        if mask.at(i, j) != 0.0 {
                            *d = gi * (v - yi).exp();
                        }
                    }
                }
                self.accum(grads, *x, delta);
            }
            Op::DiagPart(a) => {
                let n = self.value(*a).rows();
                let mut delta = DenseMatrix::zeros(n, n);
                for i in 0..n {
                    delta.set(i, i, g.at(i, 0));
                }
                self.accum(grads, *a, delta);
            }
            Op::Sum(a) => {
                let va = self.value(*a);
                self.accum(grads, *a, DenseMatrix::filled(va.rows(), va.cols(), g.at(0, 0)));
            }
            Op::SegmentMean { x, segments, counts } => {
                let vx = self.value(*x);
                let mut delta = DenseMatrix::zeros(vx.rows(), vx.cols());
                for (i, &s) in segments.iter().enumerate() {
                    let inv = 1.0 / counts[s] as f64;
                    for (d, &gv) in delta.row_mut(i).iter_mut().zip(g.row(s)) {
                        *d = gv * inv;
                    }
                }
                self.accum(grads, *x, delta);
            }
            Op::BatchNorm { x, gamma, beta, saved } => {
                self.batch_norm_backward(*x, *gamma, *beta, saved, g, grads);
            }
        }
    }

    fn batch_norm_backward(
        &self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        saved: &BnSaved,
        g: &DenseMatrix,
        grads: &mut [Option<DenseMatrix>],
    ) {
        let (m, d) = saved.x_hat.shape();
        let vg = self.value(gamma);

        if self.needs_grad(beta) {
            let mut delta = DenseMatrix::zeros(1, d);
            for i in 0..m {
                for (j, &gv) in g.row(i).iter().enumerate() {
                    delta.set(0, j, delta.at(0, j) + gv);
                }
            }
            self.accum(grads, beta, delta);
        }
        if self.needs_grad(gamma) {
            let mut delta = DenseMatrix::zeros(1, d);
            for i in 0..m {
                for (j, (&gv, &xh)) in g.row(i).iter().zip(saved.x_hat.row(i)).enumerate() {
                    delta.set(0, j, delta.at(0, j) + gv * xh);
                }
            }
            self.accum(grads, gamma, delta);
        }
        if !self.needs_grad(x) {
            return;
        }

        let mut delta = DenseMatrix::zeros(m, d);
        if saved.batch_stats {
            // Batch statistics depend on x; where the variance sits at the
            // floor, the scale is locally constant and only mean centering
            // contributes.
            let mut sum_g = vec![0.0; d];
            let mut sum_gx = vec![0.0; d];
            for i in 0..m {
                for (j, (&gv, &xh)) in g.row(i).iter().zip(saved.x_hat.row(i)).enumerate() {
                    sum_g[j] += gv;
                    sum_gx[j] += gv * xh;
                }
            }
            let inv_m = 1.0 / m as f64;
            for i in 0..m {
                for j in 0..d {
                    let k = vg.at(0, j) * saved.inv_std[j];
                    let centered = g.at(i, j) - sum_g[j] * inv_m;
                    let v = if saved.floored[j] {
                        k * centered
                    } else {
                        k * (centered - saved.x_hat.at(i, j) * sum_gx[j] * inv_m)
                    };
                    delta.set(i, j, v);
                }
            }
        } else {
            for i in 0..m {
                for j in 0..d {
                    delta.set(i, j, g.at(i, j) * vg.at(0, j) * saved.inv_std[j]);
                }
            }
        }
        self.accum(grads, x, delta);
    }
}
