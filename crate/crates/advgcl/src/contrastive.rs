//! InfoNCE-style contrastive losses, the information regularizer, and the
//! combined training objectives.
//!
//! Every loss is built on a [`Tape`] so gradients reach encoder weights,
//! head weights, and continuous adversarial perturbations alike. Each
//! `-log(pos/denom)` term is evaluated as `logsumexp(denominator logits) -
//! positive logit` for numerical stability.

use crate::encoders::{project, BoundHead};
use crate::error::{Error, Result};
use crate::numkit::{DenseMatrix, NodeId, Tape};

/// Temperature for the similarity kernel `exp(cos(a,b)/tau)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityConfig {
    pub tau: f64,
}

impl SimilarityConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Validation(format!("temperature must be positive, got {tau}")));
        }
        Ok(SimilarityConfig { tau })
    }
}

/// Scalar components of one combined objective evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l_con: f64,
    pub l_adv: f64,
    pub l_ir: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub total: f64,
}

/// Rows scaled to unit Euclidean norm, with the norm floored at 1e-12 so
/// zero rows stay zero instead of dividing by zero.
pub fn row_normalize(tape: &mut Tape, h: NodeId) -> Result<NodeId> {
    let norms = tape.row_norms(h, 1e-12);
    let inv = tape.recip(norms);
    tape.row_scale(h, inv)
}

/// Pairwise cosine similarities: entry `(i, j)` is `cos(z1[i], z2[j])`.
pub fn cosine_matrix(tape: &mut Tape, z1: NodeId, z2: NodeId) -> Result<NodeId> {
    let n1 = row_normalize(tape, z1)?;
    let n2 = row_normalize(tape, z2)?;
    let n2t = tape.transpose(n2);
    tape.matmul(n1, n2t)
}

/// Mask for one direction of the loss: logits are `[cross | same]` columns,
/// all kept except the self-similarity in the same-view block.
fn infonce_mask(n: usize) -> DenseMatrix {
    let mut mask = DenseMatrix::filled(n, 2 * n, 1.0);
    for i in 0..n {
        mask.set(i, n + i, 0.0);
    }
    mask
}

/// Sum over anchors of `-log(pos/denom)` for one direction, from
/// temperature-scaled similarity matrices: `cross[i][j] = theta(u_i, v_j)/tau`
/// and `same[i][j] = theta(u_i, u_j)/tau`. The denominator keeps the
/// positive, all cross-view entries, and all same-view entries except the
/// anchor itself.
pub fn infonce_direction_sum(
    tape: &mut Tape,
    cross: NodeId,
    same: NodeId,
) -> Result<NodeId> {
    let n = tape.value(cross).rows();
    let logits = tape.hconcat(cross, same)?;
    let lse = tape.logsumexp_rows(logits, infonce_mask(n))?;
    let pos = tape.diag_part(cross)?;
    let per_anchor = tape.sub(lse, pos)?;
    Ok(tape.sum(per_anchor))
}

fn check_pair(tape: &Tape, a: NodeId, b: NodeId) -> Result<usize> {
    let (va, vb) = (tape.value(a), tape.value(b));
    if va.shape() != vb.shape() {
        return Err(Error::Dimension(format!(
            "embedding shapes differ: {}x{} vs {}x{}",
            va.rows(),
            va.cols(),
            vb.rows(),
            vb.cols()
        )));
    }
    if va.rows() == 0 {
        return Err(Error::EmptyInput("losses need at least one row".into()));
    }
    Ok(va.rows())
}

/// Symmetrized node-level loss: `(1/2n) sum_i [l(u_i,v_i) + l(v_i,u_i)]`
/// where each `l` uses the positive pair against cross-view and same-view
/// negatives. `theta` is cosine similarity on head-projected embeddings.
pub fn node_contrastive_loss(
    tape: &mut Tape,
    h1: NodeId,
    h2: NodeId,
    head: &BoundHead,
    cfg: &SimilarityConfig,
) -> Result<NodeId> {
    let n = check_pair(tape, h1, h2)?;
    let z1 = project(tape, h1, head)?;
    let z2 = project(tape, h2, head)?;
    let s12 = cosine_matrix(tape, z1, z2)?;
    let s11 = cosine_matrix(tape, z1, z1)?;
    let s22 = cosine_matrix(tape, z2, z2)?;
    let inv_tau = 1.0 / cfg.tau;
    let c12 = tape.scale(s12, inv_tau);
    let c11 = tape.scale(s11, inv_tau);
    let c22 = tape.scale(s22, inv_tau);
    let forward = infonce_direction_sum(tape, c12, c11)?;
    let c21 = tape.transpose(c12);
    let backward = infonce_direction_sum(tape, c21, c22)?;
    let both = tape.add(forward, backward)?;
    Ok(tape.scale(both, 1.0 / (2.0 * n as f64)))
}

/// One-directional graph-level loss on readout embeddings: the mean over
/// anchors of `-log(pos/denom)` with `r` as the anchor view.
pub fn graph_contrastive_loss(
    tape: &mut Tape,
    r: NodeId,
    r_plus: NodeId,
    head: &BoundHead,
    cfg: &SimilarityConfig,
) -> Result<NodeId> {
    let b = check_pair(tape, r, r_plus)?;
    let z1 = project(tape, r, head)?;
    let z2 = project(tape, r_plus, head)?;
    let s12 = cosine_matrix(tape, z1, z2)?;
    let s11 = cosine_matrix(tape, z1, z1)?;
    let inv_tau = 1.0 / cfg.tau;
    let c12 = tape.scale(s12, inv_tau);
    let c11 = tape.scale(s11, inv_tau);
    let total = infonce_direction_sum(tape, c12, c11)?;
    Ok(tape.scale(total, 1.0 / b as f64))
}

/// Hinged divergence penalty `(1/n) sum_i max(d_i, 0)` with
/// `d_i = 2 theta(h1_i, h2_i) - theta(h2_i, h_i) - theta(h1_i, h_i)`,
/// `theta` being cosine on head-projected rows. Zero when both views stay
/// at least as close to the anchor as they are to each other.
pub fn info_regularization(
    tape: &mut Tape,
    h1: NodeId,
    h2: NodeId,
    h: NodeId,
    head: &BoundHead,
) -> Result<NodeId> {
    let n = check_pair(tape, h1, h2)?;
    check_pair(tape, h1, h)?;
    let z1 = project(tape, h1, head)?;
    let z2 = project(tape, h2, head)?;
    let za = project(tape, h, head)?;
    let s12 = cosine_matrix(tape, z1, z2)?;
    let s2a = cosine_matrix(tape, z2, za)?;
    let s1a = cosine_matrix(tape, z1, za)?;
    let d12 = tape.diag_part(s12)?;
    let d2a = tape.diag_part(s2a)?;
    let d1a = tape.diag_part(s1a)?;
    let twice = tape.scale(d12, 2.0);
    let anchored = tape.add(d2a, d1a)?;
    let d = tape.sub(twice, anchored)?;
    let hinged = tape.relu(d);
    let total = tape.sum(hinged);
    Ok(tape.scale(total, 1.0 / n as f64))
}

fn check_coefficients(eps1: f64, eps2: f64) -> Result<()> {
    if !(eps1 >= 0.0) || !(eps2 >= 0.0) {
        return Err(Error::Validation(format!(
            "loss coefficients must be non-negative, got eps1={eps1} eps2={eps2}"
        )));
    }
    Ok(())
}

fn assemble(
    tape: &mut Tape,
    l_con: NodeId,
    l_adv: NodeId,
    l_ir: NodeId,
    eps1: f64,
    eps2: f64,
) -> Result<(NodeId, LossBreakdown)> {
    let adv_term = tape.scale(l_adv, eps1);
    let ir_term = tape.scale(l_ir, eps2);
    let partial = tape.add(l_con, adv_term)?;
    let total = tape.add(partial, ir_term)?;
    let breakdown = LossBreakdown {
        l_con: tape.scalar(l_con)?,
        l_adv: tape.scalar(l_adv)?,
        l_ir: tape.scalar(l_ir)?,
        eps1,
        eps2,
        total: tape.scalar(total)?,
    };
    Ok((total, breakdown))
}

/// Node-level objective:
/// `L_con(h1, h2) + eps1 * L_con(h1, h_adv) + eps2 * L_I(h1, h2, h_clean)`.
pub fn node_objective(
    tape: &mut Tape,
    h1: NodeId,
    h2: NodeId,
    h_adv: NodeId,
    h_clean: NodeId,
    head: &BoundHead,
    cfg: &SimilarityConfig,
    eps1: f64,
    eps2: f64,
) -> Result<(NodeId, LossBreakdown)> {
    check_coefficients(eps1, eps2)?;
    let l_con = node_contrastive_loss(tape, h1, h2, head, cfg)?;
    let l_adv = node_contrastive_loss(tape, h1, h_adv, head, cfg)?;
    let l_ir = info_regularization(tape, h1, h2, h_clean, head)?;
    assemble(tape, l_con, l_adv, l_ir, eps1, eps2)
}

/// Graph-level objective on readouts:
/// `L_con(r, r_plus) + eps1 * L_con(r_plus, r_adv) + eps2 * L_I(r, r_plus, r_adv)`.
pub fn graph_objective(
    tape: &mut Tape,
    r: NodeId,
    r_plus: NodeId,
    r_adv: NodeId,
    head: &BoundHead,
    cfg: &SimilarityConfig,
    eps1: f64,
    eps2: f64,
) -> Result<(NodeId, LossBreakdown)> {
    check_coefficients(eps1, eps2)?;
    let l_con = graph_contrastive_loss(tape, r, r_plus, head, cfg)?;
    let l_adv = graph_contrastive_loss(tape, r_plus, r_adv, head, cfg)?;
    let l_ir = info_regularization(tape, r, r_plus, r_adv, head)?;
    assemble(tape, l_con, l_adv, l_ir, eps1, eps2)
}
