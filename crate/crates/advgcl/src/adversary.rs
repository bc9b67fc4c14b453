//! Projected gradient ascent on graph structure and features.
//!
//! The attack maintains a relaxed edge-flip matrix `L` in `[0,1]` over the
//! upper triangle and a feature offset `L_X` in an l-infinity box. Each step
//! runs the encoder on the perturbed graph `(A + C o (L + L^T), X + L_X)`,
//! differentiates the contrastive loss against a fixed anchor view, ascends,
//! and projects back onto the budget. Edges are discretized at the end by
//! one Bernoulli draw per upper-triangular entry.

use crate::contrastive::{graph_contrastive_loss, node_contrastive_loss, SimilarityConfig};
use crate::encoders::{
    gcn_forward, gin_forward, normalize_adjacency_continuous, readout, Adjacency, BnMode,
    GcnParams, GinParams, ProjectionHead,
};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::numkit::{DenseMatrix, NodeId, SparseSymmetric, Tape};
use rand::Rng;

/// Pairs the relaxed edge variables may touch.
#[derive(Clone, Debug)]
pub enum Support {
    /// Any pair `i < j` (single-graph attacks).
    AllPairs,
    /// Only pairs inside the same block of a combined batch; the vector maps
    /// each node to its graph index.
    SameSegment(Vec<usize>),
}

impl Support {
    pub fn contains(&self, i: usize, j: usize) -> bool {
        match self {
            Support::AllPairs => true,
            Support::SameSegment(seg) => seg[i] == seg[j],
        }
    }
}

/// Relaxed edge-flip variables: an `n x n` matrix holding values in `[0,1]`
/// strictly above the diagonal (inside the support) and zeros elsewhere.
#[derive(Clone, Debug)]
pub struct EdgePerturbation {
    n: usize,
    relaxed: DenseMatrix,
    support: Support,
}

impl EdgePerturbation {
    pub fn node_level(n: usize) -> Self {
        EdgePerturbation { n, relaxed: DenseMatrix::zeros(n, n), support: Support::AllPairs }
    }

    pub fn graph_level(segments: &[usize]) -> Self {
        let n = segments.len();
        EdgePerturbation {
            n,
            relaxed: DenseMatrix::zeros(n, n),
            support: Support::SameSegment(segments.to_vec()),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn relaxed(&self) -> &DenseMatrix {
        &self.relaxed
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    /// Sum of all relaxed entries (the expected number of flips).
    pub fn total_mass(&self) -> f64 {
        self.relaxed.sum()
    }
}

/// Additive feature offsets, kept within `|entry| <= delta_x` by clipping.
#[derive(Clone, Debug)]
pub struct FeaturePerturbation {
    pub values: DenseMatrix,
}

/// Attack hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct AttackConfig {
    /// Number of gradient ascent steps.
    pub steps: usize,
    /// Edge step size.
    pub alpha: f64,
    /// Feature step size (applied to the gradient sign).
    pub beta: f64,
    /// Edge budget as a fraction of the double-counted adjacency sum: the
    /// budget is `ratio * sum_ij A[i,j]`, twice the edge count.
    pub delta_a_ratio: f64,
    /// Half-width of the feature box.
    pub delta_x: f64,
    /// Bisection stopping tolerance on the budget residual.
    pub bisect_tol: f64,
    /// Bisection iteration cap.
    pub bisect_max_iter: usize,
}

impl AttackConfig {
    pub fn new(
        steps: usize,
        alpha: f64,
        beta: f64,
        delta_a_ratio: f64,
        delta_x: f64,
    ) -> Result<Self> {
        let cfg = AttackConfig {
            steps,
            alpha,
            beta,
            delta_a_ratio,
            delta_x,
            bisect_tol: 1e-6,
            bisect_max_iter: 50,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::Validation(format!(
                "attack step sizes must be positive, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if !(self.delta_a_ratio >= 0.0) || !(self.delta_x >= 0.0) {
            return Err(Error::Validation(format!(
                "attack budgets must be non-negative, got ratio={} delta_x={}",
                self.delta_a_ratio, self.delta_x
            )));
        }
        if !(self.bisect_tol > 0.0) || self.bisect_max_iter == 0 {
            return Err(Error::Validation("bisection needs tol > 0 and at least one iteration".into()));
        }
        Ok(())
    }
}

/// Encoder the attack differentiates through, with its anchor semantics.
pub enum AttackTarget<'a> {
    /// Node level: two-layer convolution on the continuously renormalized
    /// perturbed adjacency, loss anchored on fixed node embeddings.
    NodeGcn { gcn: &'a GcnParams, head: &'a ProjectionHead },
    /// Graph level: isomorphism network on the raw perturbed adjacency,
    /// mean readout per block, one-directional loss anchored on fixed
    /// readout embeddings. Gradients outside blocks are discarded.
    GraphGin {
        gin: &'a mut GinParams,
        head: &'a ProjectionHead,
        segments: &'a [usize],
        num_graphs: usize,
        per_graph_budget: bool,
    },
}

/// Everything the attack produced: the discrete adversarial graph plus the
/// relaxed state it was sampled from.
pub struct AttackOutcome {
    pub graph: Graph,
    pub edges: EdgePerturbation,
    pub features: FeaturePerturbation,
    pub flips: SparseSymmetric,
}

/// Sign matrix of allowed flips: `+1` where an edge can be added, `-1` where
/// one can be removed, zero on the diagonal.
pub fn flip_mask(a: &SparseSymmetric) -> SparseSymmetric {
    let n = a.n();
    let mut present = vec![false; n * n];
    for &(i, j, _) in a.entries() {
        present[i * n + j] = true;
    }
    let mut entries = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            entries.push((i, j, if present[i * n + j] { -1.0 } else { 1.0 }));
        }
    }
    SparseSymmetric::new(n, entries).expect("flip mask entries are valid by construction")
}

/// Tape-level perturbed graph: `A' = A + C o (L + L^T)` and `X' = X + L_X`.
/// `a`, `c`, and `x` are constants; `l` holds the upper-triangular relaxed
/// entries and `lx` the feature offsets, both differentiable leaves.
pub fn apply_perturbation(
    tape: &mut Tape,
    a: NodeId,
    c: NodeId,
    l: NodeId,
    x: NodeId,
    lx: NodeId,
) -> Result<(NodeId, NodeId)> {
    let lt = tape.transpose(l);
    let lsym = tape.add(l, lt)?;
    let signed = tape.mul(c, lsym)?;
    let a_prime = tape.add(a, signed)?;
    let x_prime = tape.add(x, lx)?;
    Ok((a_prime, x_prime))
}

/// Projection of arbitrary reals onto `{v in [0,1]^k : sum v <= delta}`.
///
/// If clipping alone is feasible it is returned unchanged; otherwise the
/// shift `mu` with `sum clip(v - mu) = delta` is found by bisection over
/// `[0, max v]` and applied. Entries equal to zero stay zero, so values
/// outside a support are preserved.
pub fn project_edge_budget(
    z: &DenseMatrix,
    delta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<DenseMatrix> {
    if !z.is_finite() {
        return Err(Error::Numeric("projection input contains non-finite values".into()));
    }
    if !(delta >= 0.0) {
        return Err(Error::Validation(format!("budget must be non-negative, got {delta}")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::Validation("projection needs tol > 0 and at least one iteration".into()));
    }
    let mut out = z.clone();
    project_values(out.values_mut(), delta, tol, max_iter);
    Ok(out)
}

fn project_values(values: &mut [f64], delta: f64, tol: f64, max_iter: usize) {
    let clipped_sum: f64 = values.iter().map(|v| v.clamp(0.0, 1.0)).sum();
    if clipped_sum <= delta {
        for v in values.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        return;
    }
    let top = values.iter().cloned().fold(0.0_f64, f64::max);
    let sum_at = |mu: f64, values: &[f64]| -> f64 {
        values.iter().map(|v| (v - mu).clamp(0.0, 1.0)).sum()
    };
    let mut lo = 0.0;
    let mut hi = top;
    let mut mu = hi;
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        let s = sum_at(mid, values);
        if (s - delta).abs() <= tol {
            mu = mid;
            break;
        }
        if s > delta {
            lo = mid;
        } else {
            hi = mid;
        }
        mu = hi;
    }
    for v in values.iter_mut() {
        *v = (*v - mu).clamp(0.0, 1.0);
    }
}

/// One Bernoulli draw per upper-triangular entry of the relaxed matrix, in
/// row-major order; returns the sampled flip indicators.
pub fn sample_discrete(l: &EdgePerturbation, rng: &mut impl Rng) -> SparseSymmetric {
    let n = l.n;
    let mut entries = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let draw: f64 = rng.random();
            if draw < l.relaxed.at(i, j) {
                entries.push((i, j, 1.0));
            }
        }
    }
    SparseSymmetric::new(n, entries).expect("sampled flips are valid by construction")
}

/// Entrywise clamp to `[-delta_x, delta_x]`.
pub fn clip_feature_perturbation(l: &DenseMatrix, delta_x: f64) -> DenseMatrix {
    l.map(|v| v.clamp(-delta_x, delta_x))
}

/// Toggles the flipped pairs in a binary adjacency.
pub fn apply_flips(a: &SparseSymmetric, flips: &SparseSymmetric) -> Result<SparseSymmetric> {
    if a.n() != flips.n() {
        return Err(Error::Dimension("flip matrix size does not match adjacency".into()));
    }
    let n = a.n();
    let mut present = std::collections::BTreeSet::new();
    for &(i, j, _) in a.entries() {
        present.insert((i, j));
    }
    for &(i, j, _) in flips.entries() {
        if !present.remove(&(i, j)) {
            present.insert((i, j));
        }
    }
    SparseSymmetric::new(n, present.into_iter().map(|(i, j)| (i, j, 1.0)).collect())
}

fn step_sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn block_indices(segments: &[usize], num_graphs: usize) -> Vec<Vec<usize>> {
    let mut blocks = vec![Vec::new(); num_graphs];
    for (node, &g) in segments.iter().enumerate() {
        blocks[g].push(node);
    }
    blocks
}

fn project_relaxed(
    edge: &mut EdgePerturbation,
    target: &AttackTarget,
    g: &Graph,
    cfg: &AttackConfig,
) -> Result<()> {
    match target {
        AttackTarget::GraphGin { segments, num_graphs, per_graph_budget: true, .. } => {
            let blocks = block_indices(segments, *num_graphs);
            for block in &blocks {
                let mut vals = Vec::new();
                let mut slots = Vec::new();
                for (ai, &i) in block.iter().enumerate() {
                    for &j in &block[ai + 1..] {
                        let (i, j) = (i.min(j), i.max(j));
                        vals.push(edge.relaxed.at(i, j));
                        slots.push((i, j));
                    }
                }
                let block_edges: usize = g
                    .adjacency()
                    .entries()
                    .iter()
                    .filter(|&&(i, j, _)| edge.support.contains(i, j) && block.contains(&i))
                    .count();
                let delta = cfg.delta_a_ratio * 2.0 * block_edges as f64;
                project_values(&mut vals, delta, cfg.bisect_tol, cfg.bisect_max_iter);
                for (&(i, j), &v) in slots.iter().zip(&vals) {
                    edge.relaxed.set(i, j, v);
                }
            }
            Ok(())
        }
        _ => {
            let delta = cfg.delta_a_ratio * 2.0 * g.edge_count() as f64;
            let projected =
                project_edge_budget(&edge.relaxed, delta, cfg.bisect_tol, cfg.bisect_max_iter)?;
            edge.relaxed = projected;
            Ok(())
        }
    }
}

/// Runs the attack against a fixed anchor and returns the discrete
/// adversarial graph.
///
/// `anchor` holds raw (pre-head) embeddings: per-node embeddings of the
/// anchor view at node level, per-graph readouts at graph level. Each of the
/// `cfg.steps` iterations recomputes the perturbed forward pass, ascends the
/// edge variables by `alpha` times the gradient and the feature variables by
/// `beta` times its sign, then projects both onto their budgets. The only
/// randomness is the final discretization draw.
pub fn pgd_attack(
    g: &Graph,
    anchor: &DenseMatrix,
    target: &mut AttackTarget,
    sim: &SimilarityConfig,
    cfg: &AttackConfig,
    rng: &mut impl Rng,
) -> Result<AttackOutcome> {
    cfg.validate()?;
    let n = g.n();
    let mut edge = match target {
        AttackTarget::NodeGcn { .. } => EdgePerturbation::node_level(n),
        AttackTarget::GraphGin { segments, .. } => {
            if segments.len() != n {
                return Err(Error::Dimension(format!(
                    "segment map covers {} nodes but the batch has {n}",
                    segments.len()
                )));
            }
            EdgePerturbation::graph_level(segments)
        }
    };
    let mut lx = DenseMatrix::zeros(n, g.feature_dim());
    let c_dense = flip_mask(g.adjacency()).to_dense();
    let a_dense = g.dense_adjacency();

    for _ in 0..cfg.steps {
        let mut tape = Tape::new();
        let a = tape.constant(a_dense.clone());
        let c = tape.constant(c_dense.clone());
        let l = tape.var(edge.relaxed.clone());
        let x = tape.constant(g.features().clone());
        let lxn = tape.var(lx.clone());
        let (a_prime, x_prime) = apply_perturbation(&mut tape, a, c, l, x, lxn)?;
        let anchor_node = tape.constant(anchor.clone());
        let loss = match target {
            AttackTarget::NodeGcn { gcn, head } => {
                let norm = normalize_adjacency_continuous(&mut tape, a_prime)?;
                let bound = gcn.bind(&mut tape, false);
                let h_adv = gcn_forward(&mut tape, &Adjacency::Dense(norm), x_prime, &bound)?;
                let bh = head.bind(&mut tape, false);
                node_contrastive_loss(&mut tape, anchor_node, h_adv, &bh, sim)?
            }
            AttackTarget::GraphGin { gin, head, segments, num_graphs, .. } => {
                let bound = gin.bind(&mut tape, false);
                let out = gin_forward(
                    &mut tape,
                    &Adjacency::Dense(a_prime),
                    x_prime,
                    gin,
                    &bound,
                    BnMode::Train { update_running: false },
                )?;
                let r_adv = readout(&mut tape, &out.per_layer, segments, *num_graphs)?;
                let bh = head.bind(&mut tape, false);
                graph_contrastive_loss(&mut tape, anchor_node, r_adv, &bh, sim)?
            }
        };
        let grads = tape.backward(loss)?;
        let gl = grads.expect(l)?;
        let glx = grads.expect(lxn)?;

        for i in 0..n {
            for j in i + 1..n {
                if !edge.support.contains(i, j) {
                    continue;
                }
                let v = edge.relaxed.at(i, j) + cfg.alpha * gl.at(i, j);
                edge.relaxed.set(i, j, v);
            }
        }
        project_relaxed(&mut edge, target, g, cfg)?;

        for i in 0..n {
            for j in 0..lx.cols() {
                lx.set(i, j, lx.at(i, j) + cfg.beta * step_sign(glx.at(i, j)));
            }
        }
        lx = clip_feature_perturbation(&lx, cfg.delta_x);
        if !edge.relaxed.is_finite() || !lx.is_finite() {
            return Err(Error::Numeric("attack produced non-finite perturbations".into()));
        }
    }

    let flips = sample_discrete(&edge, rng);
    let adjacency = apply_flips(g.adjacency(), &flips)?;
    let features = g.features().add(&lx)?;
    let graph = Graph::new(adjacency, features, g.labels().cloned(), g.num_classes())?;
    Ok(AttackOutcome { graph, edges: edge, features: FeaturePerturbation { values: lx }, flips })
}
