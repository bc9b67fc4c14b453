//! Graph encoders: a two-layer GCN for node-level work, a three-layer GIN
//! with concatenated mean-pool readout for graph-level work, and the shared
//! two-layer projection head used inside the losses.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numkit::{BnState, DenseMatrix, NodeId, SparseSymmetric, Tape};

/// Activation applied inside encoders. `Identity` exists as a test hook so
/// hand-computable fixtures stay linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: NodeId) -> NodeId {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Identity => x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Validation(format!("unknown activation {other:?}"))),
        }
    }
}

/// Adjacency operand for encoder forwards: either a constant sparse matrix
/// or a dense tape node carrying continuous, differentiable entries.
pub enum Adjacency<'a> {
    Sparse(&'a SparseSymmetric),
    Dense(NodeId),
}

fn adj_apply(tape: &mut Tape, adj: &Adjacency, x: NodeId) -> Result<NodeId> {
    match adj {
        Adjacency::Sparse(s) => tape.spmm(s, x),
        Adjacency::Dense(a) => tape.matmul(*a, x),
    }
}

/// Symmetric normalization of a dense continuous adjacency on the tape:
/// `D^(-1/2) (A + I) D^(-1/2)` with degrees floored at 1e-12. Gradients flow
/// through both the entries and the degree terms.
pub fn normalize_adjacency_continuous(tape: &mut Tape, a: NodeId) -> Result<NodeId> {
    let n = tape.value(a).rows();
    if tape.value(a).cols() != n {
        return Err(Error::Dimension("continuous adjacency must be square".into()));
    }
    let eye = tape.constant(DenseMatrix::identity(n));
    let tilde = tape.add(a, eye)?;
    let deg = tape.row_sum(tilde);
    let s = tape.rsqrt_floor(deg, 1e-12);
    let rows = tape.row_scale(tilde, s)?;
    tape.col_scale(rows, s)
}

/// Two-layer GCN weights.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnParams {
    pub w1: DenseMatrix,
    pub w2: DenseMatrix,
    pub activation: Activation,
}

/// Tape bindings for [`GcnParams`].
pub struct BoundGcn {
    pub w1: NodeId,
    pub w2: NodeId,
    activation: Activation,
}

impl GcnParams {
    /// Places the weights on the tape, as variables when `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundGcn {
        let mut put = |m: &DenseMatrix| {
            if trainable {
                tape.var(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        BoundGcn { w1: put(&self.w1), w2: put(&self.w2), activation: self.activation }
    }

    pub fn params(&self) -> Vec<&DenseMatrix> {
        vec![&self.w1, &self.w2]
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        vec![&mut self.w1, &mut self.w2]
    }
}

/// `sigma(A^ sigma(A^ X W1) W2)` on an already-normalized adjacency.
pub fn gcn_forward(
    tape: &mut Tape,
    adj: &Adjacency,
    x: NodeId,
    p: &BoundGcn,
) -> Result<NodeId> {
    let xw1 = tape.matmul(x, p.w1)?;
    let z1 = adj_apply(tape, adj, xw1)?;
    let a1 = p.activation.apply(tape, z1);
    let aw2 = tape.matmul(a1, p.w2)?;
    let z2 = adj_apply(tape, adj, aw2)?;
    Ok(p.activation.apply(tape, z2))
}

/// One GIN layer: a two-layer MLP, an activation, then batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct GinLayer {
    pub w1: DenseMatrix,
    pub b1: DenseMatrix,
    pub w2: DenseMatrix,
    pub b2: DenseMatrix,
    pub bn_scale: DenseMatrix,
    pub bn_shift: DenseMatrix,
    pub bn_state: BnState,
}

/// Three-layer GIN. `use_batch_norm: false` is a test hook that lets
/// fixtures compute layer outputs by hand.
#[derive(Clone, Debug, PartialEq)]
pub struct GinParams {
    pub layers: Vec<GinLayer>,
    pub activation: Activation,
    pub use_batch_norm: bool,
}

pub struct BoundGinLayer {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
    pub bn_scale: NodeId,
    pub bn_shift: NodeId,
}

pub struct BoundGin {
    pub layers: Vec<BoundGinLayer>,
    activation: Activation,
    use_batch_norm: bool,
}

/// Batch-norm behaviour during a GIN forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Batch statistics; refreshes running stats when the flag is set.
    Train { update_running: bool },
    /// Running statistics; never mutates state.
    Eval,
}

impl GinParams {
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundGin {
        let mut put = |m: &DenseMatrix| {
            if trainable {
                tape.var(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        let layers = self
            .layers
            .iter()
            .map(|l| BoundGinLayer {
                w1: put(&l.w1),
                b1: put(&l.b1),
                w2: put(&l.w2),
                b2: put(&l.b2),
                bn_scale: put(&l.bn_scale),
                bn_shift: put(&l.bn_shift),
            })
            .collect();
        BoundGin { layers, activation: self.activation, use_batch_norm: self.use_batch_norm }
    }

    pub fn params(&self) -> Vec<&DenseMatrix> {
        self.layers
            .iter()
            .flat_map(|l| vec![&l.w1, &l.b1, &l.w2, &l.b2, &l.bn_scale, &l.bn_shift])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                vec![
                    &mut l.w1,
                    &mut l.b1,
                    &mut l.w2,
                    &mut l.b2,
                    &mut l.bn_scale,
                    &mut l.bn_shift,
                ]
            })
            .collect()
    }
}

/// Per-layer node embeddings plus their column-wise concatenation.
pub struct GinOutput {
    pub per_layer: Vec<NodeId>,
    pub concat: NodeId,
}

/// Runs the GIN on the raw (unnormalized) adjacency: each layer computes
/// `batch_norm(act(mlp(A x)))` and the final embedding concatenates all
/// three layer outputs.
pub fn gin_forward(
    tape: &mut Tape,
    adj: &Adjacency,
    x: NodeId,
    p: &mut GinParams,
    bound: &BoundGin,
    mode: BnMode,
) -> Result<GinOutput> {
    if p.layers.len() != bound.layers.len() {
        return Err(Error::Dimension("bound GIN does not match its params".into()));
    }
    let mut per_layer = Vec::with_capacity(bound.layers.len());
    let mut current = x;
    for (layer, ids) in p.layers.iter_mut().zip(&bound.layers) {
        let ax = adj_apply(tape, adj, current)?;
        let z1 = tape.matmul(ax, ids.w1)?;
        let z1 = tape.add_row_broadcast(z1, ids.b1)?;
        let a1 = bound.activation.apply(tape, z1);
        let z2 = tape.matmul(a1, ids.w2)?;
        let z2 = tape.add_row_broadcast(z2, ids.b2)?;
        let a2 = bound.activation.apply(tape, z2);
        let out = if bound.use_batch_norm {
            match mode {
                BnMode::Train { update_running } => tape.batch_norm_train(
                    a2,
                    ids.bn_scale,
                    ids.bn_shift,
                    &mut layer.bn_state,
                    update_running,
                )?,
                BnMode::Eval => {
                    tape.batch_norm_eval(a2, ids.bn_scale, ids.bn_shift, &layer.bn_state)?
                }
            }
        } else {
            a2
        };
        per_layer.push(out);
        current = out;
    }
    let mut concat = per_layer[0];
    for &layer in &per_layer[1..] {
        concat = tape.hconcat(concat, layer)?;
    }
    Ok(GinOutput { per_layer, concat })
}

/// Graph-level readout: mean-pools each layer's rows per graph, then
/// concatenates the per-layer pooled vectors.
pub fn readout(
    tape: &mut Tape,
    per_layer: &[NodeId],
    segments: &[usize],
    num_graphs: usize,
) -> Result<NodeId> {
    if per_layer.is_empty() {
        return Err(Error::EmptyInput("readout needs at least one layer".into()));
    }
    let mut pooled = Vec::with_capacity(per_layer.len());
    for &layer in per_layer {
        pooled.push(tape.segment_mean(layer, segments, num_graphs)?);
    }
    let mut concat = pooled[0];
    for &p in &pooled[1..] {
        concat = tape.hconcat(concat, p)?;
    }
    Ok(concat)
}

/// Two-layer projection head used only inside the losses.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionHead {
    pub w1: DenseMatrix,
    pub b1: DenseMatrix,
    pub w2: DenseMatrix,
    pub b2: DenseMatrix,
}

pub struct BoundHead {
    pub w1: NodeId,
    pub b1: NodeId,
    pub w2: NodeId,
    pub b2: NodeId,
}

impl ProjectionHead {
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundHead {
        let mut put = |m: &DenseMatrix| {
            if trainable {
                tape.var(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        BoundHead { w1: put(&self.w1), b1: put(&self.b1), w2: put(&self.w2), b2: put(&self.b2) }
    }

    pub fn params(&self) -> Vec<&DenseMatrix> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Identity-weight head: projection reduces to `ReLU(h)`.
    pub fn identity(dim: usize) -> Self {
        ProjectionHead {
            w1: DenseMatrix::identity(dim),
            b1: DenseMatrix::zeros(1, dim),
            w2: DenseMatrix::identity(dim),
            b2: DenseMatrix::zeros(1, dim),
        }
    }
}

/// `layer2(ReLU(layer1(h)))`.
pub fn project(tape: &mut Tape, h: NodeId, head: &BoundHead) -> Result<NodeId> {
    let z1 = tape.matmul(h, head.w1)?;
    let z1 = tape.add_row_broadcast(z1, head.b1)?;
    let a1 = tape.relu(z1);
    let z2 = tape.matmul(a1, head.w2)?;
    tape.add_row_broadcast(z2, head.b2)
}

/// Trained model: encoder plus projection head.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelParams {
    Node { gcn: GcnParams, head: ProjectionHead },
    Graph { gin: GinParams, head: ProjectionHead },
}

impl ModelParams {
    pub fn params_mut(&mut self) -> Vec<&mut DenseMatrix> {
        match self {
            ModelParams::Node { gcn, head } => {
                let mut p = gcn.params_mut();
                p.extend(head.params_mut());
                p
            }
            ModelParams::Graph { gin, head } => {
                let mut p = gin.params_mut();
                p.extend(head.params_mut());
                p
            }
        }
    }

    pub fn params(&self) -> Vec<&DenseMatrix> {
        match self {
            ModelParams::Node { gcn, head } => {
                let mut p = gcn.params();
                p.extend(head.params());
                p
            }
            ModelParams::Graph { gin, head } => {
                let mut p = gin.params();
                p.extend(head.params());
                p
            }
        }
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> DenseMatrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
        .collect();
    DenseMatrix::from_vec(rows, cols, data).expect("finite init")
}

/// Glorot-uniform GCN weights.
pub fn init_gcn(d: usize, hidden: usize, out: usize, rng: &mut impl Rng) -> Result<GcnParams> {
    if d == 0 || hidden == 0 || out == 0 {
        return Err(Error::Validation("encoder dims must be positive".into()));
    }
    Ok(GcnParams {
        w1: glorot(d, hidden, rng),
        w2: glorot(hidden, out, rng),
        activation: Activation::Relu,
    })
}

/// Glorot-uniform GIN weights: three layers of width `width`, batch-norm
/// scale 1 / shift 0, running stats at (0, 1).
pub fn init_gin(d: usize, width: usize, rng: &mut impl Rng) -> Result<GinParams> {
    if d == 0 || width == 0 {
        return Err(Error::Validation("encoder dims must be positive".into()));
    }
    let mut layers = Vec::with_capacity(3);
    let mut in_dim = d;
    for _ in 0..3 {
        layers.push(GinLayer {
            w1: glorot(in_dim, width, rng),
            b1: DenseMatrix::zeros(1, width),
            w2: glorot(width, width, rng),
            b2: DenseMatrix::zeros(1, width),
            bn_scale: DenseMatrix::filled(1, width, 1.0),
            bn_shift: DenseMatrix::zeros(1, width),
            bn_state: BnState::new(width, 0.1),
        });
        in_dim = width;
    }
    Ok(GinParams { layers, activation: Activation::Relu, use_batch_norm: true })
}

/// Glorot-uniform projection head with hidden width equal to `dim`.
pub fn init_head(dim: usize, rng: &mut impl Rng) -> Result<ProjectionHead> {
    if dim == 0 {
        return Err(Error::Validation("head dim must be positive".into()));
    }
    Ok(ProjectionHead {
        w1: glorot(dim, dim, rng),
        b1: DenseMatrix::zeros(1, dim),
        w2: glorot(dim, dim, rng),
        b2: DenseMatrix::zeros(1, dim),
    })
}
