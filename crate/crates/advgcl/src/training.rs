//! Training loops: per-iteration subgraph sampling, two stochastic views,
//! an adversarial view, the combined objective, an Adam step, and the
//! curriculum on the adversarial coefficient; plus the batched graph-level
//! variant.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adversary::{pgd_attack, AttackConfig, AttackTarget};
use crate::contrastive::{graph_objective, node_objective, LossBreakdown, SimilarityConfig};
use crate::encoders::{
    gcn_forward, gin_forward, init_gcn, init_gin, init_head, readout, Adjacency, BnMode,
    BoundGcn, BoundGin, BoundHead, GcnParams, GinParams, ProjectionHead,
};
use crate::error::{Error, Result};
use crate::graph::{augment, combine_batch, normalize_adjacency, sample_subgraph, AugmentSpec, Graph};
use crate::numkit::{DenseMatrix, GradientMap, NodeId, Tape};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Full training configuration shared by both levels.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    /// Node level: number of iterations. Graph level: full passes over the
    /// dataset in shuffled batches.
    pub epochs: usize,
    pub learning_rate: f64,
    pub tau: f64,
    /// Adversarial loss coefficient (curriculum start value).
    pub eps1: f64,
    /// Information regularization coefficient; zero disables the term.
    pub eps2: f64,
    /// Curriculum multiplier applied to eps1 every `period_t` iterations.
    pub gamma: f64,
    pub period_t: usize,
    pub augment1: AugmentSpec,
    pub augment2: AugmentSpec,
    /// Node level only: nodes per sampled subgraph.
    pub subgraph_size: usize,
    /// Graph level only: graphs per batch.
    pub batch_size: usize,
    /// GCN hidden width (node level).
    pub hidden_dim: usize,
    /// GCN output width (node level) and GIN layer width (graph level).
    pub embed_dim: usize,
    pub attack: AttackConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// Node-level defaults: temperature 0.5, both coefficients 1, curriculum
    /// 1.1 every 20 iterations, attack of 5 steps with a 10% edge budget.
    pub fn node_defaults() -> Self {
        TrainConfig {
            epochs: 400,
            learning_rate: 1e-3,
            tau: 0.5,
            eps1: 1.0,
            eps2: 1.0,
            gamma: 1.1,
            period_t: 20,
            augment1: AugmentSpec::new(0.2, 0.2).expect("valid default"),
            augment2: AugmentSpec::new(0.2, 0.2).expect("valid default"),
            subgraph_size: 500,
            batch_size: 32,
            hidden_dim: 64,
            embed_dim: 32,
            attack: AttackConfig::new(5, 0.01, 0.01, 0.1, 0.5).expect("valid default"),
            seed: 0,
        }
    }

    /// Graph-level defaults: flat curriculum and the tighter 5% edge budget
    /// with a 0.04 feature box.
    pub fn graph_defaults() -> Self {
        let mut cfg = TrainConfig::node_defaults();
        cfg.gamma = 1.0;
        cfg.attack = AttackConfig::new(5, 0.01, 0.01, 0.05, 0.04).expect("valid default");
        cfg.epochs = 20;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Validation(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Validation(format!("temperature must be positive, got {}", self.tau)));
        }
        if !(self.eps1 >= 0.0) || !(self.eps2 >= 0.0) {
            return Err(Error::Validation(format!(
                "loss coefficients must be non-negative, got eps1={} eps2={}",
                self.eps1, self.eps2
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Validation(format!("curriculum weight must be positive, got {}", self.gamma)));
        }
        if self.period_t == 0 {
            return Err(Error::Validation("curriculum period must be at least 1".into()));
        }
        if self.subgraph_size == 0 {
            return Err(Error::Validation("subgraph size must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Validation("batch size must be at least 2".into()));
        }
        if self.hidden_dim == 0 || self.embed_dim == 0 {
            return Err(Error::Validation("encoder widths must be positive".into()));
        }
        self.attack.validate()
    }
}

/// Adam moment accumulators, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
    step: usize,
}

impl AdamState {
    pub fn for_params(params: &[&DenseMatrix]) -> Self {
        AdamState {
            m: params.iter().map(|p| DenseMatrix::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|p| DenseMatrix::zeros(p.rows(), p.cols())).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }
}

/// One bias-corrected Adam update over parallel parameter/gradient slices.
pub fn optimizer_step(
    params: &mut [&mut DenseMatrix],
    grads: &[DenseMatrix],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "optimizer saw {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (k, p) in params.iter().enumerate() {
        if p.shape() != grads[k].shape() || p.shape() != state.m[k].shape() {
            return Err(Error::Dimension(format!("optimizer shape mismatch at parameter {k}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for (k, p) in params.iter_mut().enumerate() {
        let g = &grads[k];
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        for idx in 0..g.values().len() {
            let gv = g.values()[idx];
            let mv = ADAM_BETA1 * m.values()[idx] + (1.0 - ADAM_BETA1) * gv;
            let vv = ADAM_BETA2 * v.values()[idx] + (1.0 - ADAM_BETA2) * gv * gv;
            m.values_mut()[idx] = mv;
            v.values_mut()[idx] = vv;
            let m_hat = mv / bc1;
            let v_hat = vv / bc2;
            p.values_mut()[idx] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// One training iteration's scalar record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    pub breakdown: LossBreakdown,
    pub seconds: f64,
}

/// Append-only per-iteration history.
#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn new() -> Self {
        TrainLog::default()
    }

    pub fn push(&mut self, iteration: usize, breakdown: LossBreakdown, seconds: f64) {
        self.records.push(TrainRecord { iteration, breakdown, seconds });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with header `iteration,l_con,l_adv,l_ir,total,eps1,seconds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,l_con,l_adv,l_ir,total,eps1,seconds\n");
        for r in &self.records {
            let b = &r.breakdown;
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.iteration, b.l_con, b.l_adv, b.l_ir, b.total, b.eps1, r.seconds
            ));
        }
        out
    }
}

pub struct NodeTrainOutcome {
    pub gcn: GcnParams,
    pub head: ProjectionHead,
    pub log: TrainLog,
    /// Curriculum coefficient after the last iteration.
    pub final_eps1: f64,
}

pub struct GraphTrainOutcome {
    pub gin: GinParams,
    pub head: ProjectionHead,
    pub log: TrainLog,
    pub final_eps1: f64,
}

fn gcn_param_ids(b: &BoundGcn) -> Vec<NodeId> {
    vec![b.w1, b.w2]
}

fn gin_param_ids(b: &BoundGin) -> Vec<NodeId> {
    b.layers
        .iter()
        .flat_map(|l| vec![l.w1, l.b1, l.w2, l.b2, l.bn_scale, l.bn_shift])
        .collect()
}

fn head_param_ids(b: &BoundHead) -> Vec<NodeId> {
    vec![b.w1, b.b1, b.w2, b.b2]
}

/// Gradients in parameter order; parameters unreachable from the loss (for
/// example a dead unit) contribute zero updates.
fn collect_grads(
    tape: &Tape,
    grads: &GradientMap,
    ids: &[NodeId],
) -> Vec<DenseMatrix> {
    ids.iter()
        .map(|&id| {
            grads.get(id).cloned().unwrap_or_else(|| {
                let v = tape.value(id);
                DenseMatrix::zeros(v.rows(), v.cols())
            })
        })
        .collect()
}

fn abort_if_not_finite(breakdown: &LossBreakdown, iteration: usize) -> Result<()> {
    if !breakdown.total.is_finite() {
        return Err(Error::TrainingAborted {
            iteration,
            msg: format!(
                "non-finite loss: l_con={} l_adv={} l_ir={} eps1={} eps2={}",
                breakdown.l_con, breakdown.l_adv, breakdown.l_ir, breakdown.eps1, breakdown.eps2
            ),
        });
    }
    Ok(())
}

/// Forward pass of the convolution encoder outside any loss, used for the
/// attack anchor.
fn gcn_embeddings(g: &Graph, gcn: &GcnParams) -> Result<DenseMatrix> {
    let norm = normalize_adjacency(g);
    let mut tape = Tape::new();
    let x = tape.constant(g.features().clone());
    let bound = gcn.bind(&mut tape, false);
    let h = gcn_forward(&mut tape, &Adjacency::Sparse(&norm), x, &bound)?;
    Ok(tape.value(h).clone())
}

/// Readout embeddings of a combined batch without gradient tracking, used
/// for the graph-level attack anchor. Batch statistics are used but running
/// statistics stay untouched.
fn gin_readout_embeddings(
    g: &Graph,
    segments: &[usize],
    num_graphs: usize,
    gin: &mut GinParams,
) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let x = tape.constant(g.features().clone());
    let bound = gin.bind(&mut tape, false);
    let out = gin_forward(
        &mut tape,
        &Adjacency::Sparse(g.adjacency()),
        x,
        gin,
        &bound,
        BnMode::Train { update_running: false },
    )?;
    let r = readout(&mut tape, &out.per_layer, segments, num_graphs)?;
    Ok(tape.value(r).clone())
}

/// Iterative scheme on a single graph: every iteration samples a subgraph,
/// augments it into two views, builds the adversarial view against the
/// first, and takes one Adam step on the combined objective. Every
/// `period_t` iterations the adversarial coefficient is multiplied by
/// `gamma`.
pub fn train_node_level(g: &Graph, cfg: &TrainConfig) -> Result<NodeTrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gcn = init_gcn(g.feature_dim(), cfg.hidden_dim, cfg.embed_dim, &mut rng)?;
    let mut head = init_head(cfg.embed_dim, &mut rng)?;
    let sim = SimilarityConfig::new(cfg.tau)?;
    let mut eps1 = cfg.eps1;
    let mut adam = {
        let mut refs = gcn.params();
        refs.extend(head.params());
        AdamState::for_params(&refs)
    };
    let mut log = TrainLog::new();

    for k in 0..cfg.epochs {
        let start = Instant::now();
        let sample = sample_subgraph(g, cfg.subgraph_size, &mut rng)?;
        let gs = &sample.subgraph;
        let g1 = augment(gs, &cfg.augment1, &mut rng);
        let g2 = augment(gs, &cfg.augment2, &mut rng);

        let anchor = gcn_embeddings(&g1, &gcn)?;
        let mut target = AttackTarget::NodeGcn { gcn: &gcn, head: &head };
        let adv = pgd_attack(gs, &anchor, &mut target, &sim, &cfg.attack, &mut rng)?;

        let mut tape = Tape::new();
        let bgcn = gcn.bind(&mut tape, true);
        let bhead = head.bind(&mut tape, true);
        let forward = |tape: &mut Tape, view: &Graph| -> Result<NodeId> {
            let norm = normalize_adjacency(view);
            let x = tape.constant(view.features().clone());
            gcn_forward(tape, &Adjacency::Sparse(&norm), x, &bgcn)
        };
        let h1 = forward(&mut tape, &g1)?;
        let h2 = forward(&mut tape, &g2)?;
        let h_adv = forward(&mut tape, &adv.graph)?;
        let h_s = forward(&mut tape, gs)?;
        let (total, breakdown) =
            node_objective(&mut tape, h1, h2, h_adv, h_s, &bhead, &sim, eps1, cfg.eps2)?;
        abort_if_not_finite(&breakdown, k)?;

        let grads = tape.backward(total)?;
        let mut ids = gcn_param_ids(&bgcn);
        ids.extend(head_param_ids(&bhead));
        let grad_mats = collect_grads(&tape, &grads, &ids);
        let mut params = gcn.params_mut();
        params.extend(head.params_mut());
        optimizer_step(&mut params, &grad_mats, &mut adam, cfg.learning_rate)?;

        if (k + 1) % cfg.period_t == 0 {
            eps1 *= cfg.gamma;
        }
        log.push(k, breakdown, start.elapsed().as_secs_f64());
    }
    Ok(NodeTrainOutcome { gcn, head, log, final_eps1: eps1 })
}

/// Batched scheme over a dataset of graphs: every epoch shuffles the
/// dataset, and every batch builds an augmented copy, attacks the originals
/// anchored on the augmented readouts, and steps on the readout objective.
/// Trailing batches of one graph are skipped (a single graph has no
/// negatives).
pub fn train_graph_level(dataset: &[Graph], cfg: &TrainConfig) -> Result<GraphTrainOutcome> {
    cfg.validate()?;
    if dataset.len() < 2 {
        return Err(Error::DegenerateBatch(format!(
            "graph-level training needs at least 2 graphs, got {}",
            dataset.len()
        )));
    }
    let d = dataset[0].feature_dim();
    if dataset.iter().any(|g| g.feature_dim() != d) {
        return Err(Error::Dimension("dataset graphs must share feature width".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut gin = init_gin(d, cfg.embed_dim, &mut rng)?;
    let mut head = init_head(3 * cfg.embed_dim, &mut rng)?;
    let sim = SimilarityConfig::new(cfg.tau)?;
    let mut eps1 = cfg.eps1;
    let mut adam = {
        let mut refs = gin.params();
        refs.extend(head.params());
        AdamState::for_params(&refs)
    };
    let mut log = TrainLog::new();
    let mut k = 0usize;

    for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let start = Instant::now();
            let members: Vec<Graph> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let plus_members: Vec<Graph> =
                members.iter().map(|m| augment(m, &cfg.augment1, &mut rng)).collect();
            let batch = combine_batch(&members)?;
            let plus = combine_batch(&plus_members)?;
            let segments = batch.segments();
            let num_graphs = members.len();

            let anchor =
                gin_readout_embeddings(&plus.combined, &segments, num_graphs, &mut gin)?;
            let mut target = AttackTarget::GraphGin {
                gin: &mut gin,
                head: &head,
                segments: &segments,
                num_graphs,
                per_graph_budget: false,
            };
            let adv =
                pgd_attack(&batch.combined, &anchor, &mut target, &sim, &cfg.attack, &mut rng)?;

            let mut tape = Tape::new();
            let bgin = gin.bind(&mut tape, true);
            let bhead = head.bind(&mut tape, true);
            let forward = |tape: &mut Tape, view: &Graph, gin: &mut GinParams| -> Result<NodeId> {
                let x = tape.constant(view.features().clone());
                let out = gin_forward(
                    tape,
                    &Adjacency::Sparse(view.adjacency()),
                    x,
                    gin,
                    &bgin,
                    BnMode::Train { update_running: true },
                )?;
                readout(tape, &out.per_layer, &segments, num_graphs)
            };
            let r = forward(&mut tape, &batch.combined, &mut gin)?;
            let r_plus = forward(&mut tape, &plus.combined, &mut gin)?;
            let r_adv = forward(&mut tape, &adv.graph, &mut gin)?;
            let (total, breakdown) =
                graph_objective(&mut tape, r, r_plus, r_adv, &bhead, &sim, eps1, cfg.eps2)?;
            abort_if_not_finite(&breakdown, k)?;

            let grads = tape.backward(total)?;
            let mut ids = gin_param_ids(&bgin);
            ids.extend(head_param_ids(&bhead));
            let grad_mats = collect_grads(&tape, &grads, &ids);
            let mut params = gin.params_mut();
            params.extend(head.params_mut());
            optimizer_step(&mut params, &grad_mats, &mut adam, cfg.learning_rate)?;

            if (k + 1) % cfg.period_t == 0 {
                eps1 *= cfg.gamma;
            }
            log.push(k, breakdown, start.elapsed().as_secs_f64());
            k += 1;
        }
    }
    Ok(GraphTrainOutcome { gin, head, log, final_eps1: eps1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synthetic::{generate_clique, generate_ring, generate_sbm};
    use rand::Rng;

    fn quick_node_config() -> TrainConfig {
        let mut cfg = TrainConfig::node_defaults();
        cfg.epochs = 3;
        cfg.subgraph_size = 12;
        cfg.hidden_dim = 8;
        cfg.embed_dim = 4;
        cfg.attack = AttackConfig::new(2, 0.5, 0.01, 0.1, 0.1).unwrap();
        cfg
    }

    fn small_sbm(seed: u64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        generate_sbm(&[10, 10], 0.6, 0.05, 4, 0.1, &mut rng).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let before = p.clone();
        let g = DenseMatrix::zeros(2, 2);
        let mut state = AdamState::for_params(&[&p]);
        optimizer_step(&mut [&mut p], &[g], &mut state, 0.05).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        let mut p = DenseMatrix::zeros(1, 3);
        let g = DenseMatrix::from_rows(&[vec![0.4, -2.0, 1e-3]]).unwrap();
        let mut state = AdamState::for_params(&[&p]);
        optimizer_step(&mut [&mut p], &[g.clone()], &mut state, 0.01).unwrap();
        for (idx, &gv) in g.values().iter().enumerate() {
            let want = -0.01 * gv.signum();
            assert!(
                (p.values()[idx] - want).abs() < 1e-5,
                "entry {idx}: {} vs {want}",
                p.values()[idx]
            );
        }
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        let mut w = DenseMatrix::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let mut state = AdamState::for_params(&[&w]);
        for _ in 0..500 {
            let g = w.scale(2.0);
            optimizer_step(&mut [&mut w], &[g], &mut state, 0.05).unwrap();
        }
        let norm = w.frobenius_norm();
        assert!(norm <= 1e-3, "norm {norm}");
    }

    #[test]
    fn optimizer_rejects_mismatched_shapes() {
        let mut p = DenseMatrix::zeros(2, 2);
        let g = DenseMatrix::zeros(2, 3);
        let mut state = AdamState::for_params(&[&p]);
        assert!(matches!(
            optimizer_step(&mut [&mut p], &[g], &mut state, 0.01),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn curriculum_follows_geometric_schedule() {
        let g = small_sbm(3);
        let mut cfg = quick_node_config();
        cfg.epochs = 40;
        cfg.period_t = 20;
        cfg.gamma = 1.1;
        cfg.eps1 = 1.0;
        cfg.attack.steps = 0;
        let out = train_node_level(&g, &cfg).unwrap();
        for r in &out.log.records {
            let want = 1.0 * cfg.gamma.powi((r.iteration / 20) as i32);
            assert_eq!(r.breakdown.eps1, want, "iteration {}", r.iteration);
        }
        assert!((out.final_eps1 - 1.21).abs() < 1e-12);
    }

    #[test]
    fn flat_curriculum_keeps_eps1_constant() {
        let g = small_sbm(4);
        let mut cfg = quick_node_config();
        cfg.epochs = 25;
        cfg.gamma = 1.0;
        cfg.attack.steps = 0;
        let out = train_node_level(&g, &cfg).unwrap();
        assert!(out.log.records.iter().all(|r| r.breakdown.eps1 == cfg.eps1));
    }

    #[test]
    fn training_is_reproducible_for_a_fixed_seed() {
        let g = small_sbm(5);
        let mut cfg = quick_node_config();
        cfg.seed = 9;
        let a = train_node_level(&g, &cfg).unwrap();
        let b = train_node_level(&g, &cfg).unwrap();
        assert_eq!(a.log.len(), b.log.len());
        for (ra, rb) in a.log.records.iter().zip(&b.log.records) {
            assert_eq!(ra.breakdown, rb.breakdown);
        }
        assert_eq!(a.gcn.w1, b.gcn.w1);
        assert_eq!(a.gcn.w2, b.gcn.w2);
        assert_eq!(a.head.w1, b.head.w1);
    }

    #[test]
    fn training_does_not_mutate_the_input_graph() {
        let g = small_sbm(6);
        let before_edges = g.adjacency().entries().to_vec();
        let before_feats = g.features().clone();
        let cfg = quick_node_config();
        train_node_level(&g, &cfg).unwrap();
        assert_eq!(g.adjacency().entries(), &before_edges[..]);
        assert_eq!(g.features(), &before_feats);
    }

    #[test]
    fn disabled_views_collapse_adv_onto_con() {
        // With p = 0 both views equal the subgraph and a 0-step attack
        // returns it unchanged, so the adversarial term must equal the
        // contrastive term and the regularizer must vanish.
        let g = small_sbm(7);
        let mut cfg = quick_node_config();
        cfg.epochs = 2;
        cfg.augment1 = AugmentSpec::new(0.0, 0.0).unwrap();
        cfg.augment2 = AugmentSpec::new(0.0, 0.0).unwrap();
        cfg.attack.steps = 0;
        let out = train_node_level(&g, &cfg).unwrap();
        for r in &out.log.records {
            assert_eq!(r.breakdown.l_con, r.breakdown.l_adv);
            assert_eq!(r.breakdown.l_ir, 0.0);
        }
    }

    #[test]
    fn loss_decreases_on_a_small_run() {
        // Deterministic full-batch descent: the whole graph every iteration,
        // identical views, no attack, flat curriculum. Only the optimizer
        // moves the contrastive term.
        let g = small_sbm(8);
        let mut cfg = quick_node_config();
        cfg.epochs = 60;
        cfg.subgraph_size = g.n();
        cfg.learning_rate = 5e-3;
        cfg.gamma = 1.0;
        cfg.augment1 = AugmentSpec::new(0.0, 0.0).unwrap();
        cfg.augment2 = AugmentSpec::new(0.0, 0.0).unwrap();
        cfg.attack.steps = 0;
        let out = train_node_level(&g, &cfg).unwrap();
        let first = out.log.records[0].breakdown.l_con;
        let last = out.log.records[out.log.len() - 1].breakdown.l_con;
        assert!(last < first, "loss did not trend down: first {first:.4} last {last:.4}");
    }

    #[test]
    fn csv_log_has_expected_columns() {
        let mut log = TrainLog::new();
        log.push(
            0,
            LossBreakdown { l_con: 1.5, l_adv: 1.25, l_ir: 0.5, eps1: 1.0, eps2: 0.5, total: 3.0 },
            0.25,
        );
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "iteration,l_con,l_adv,l_ir,total,eps1,seconds");
        assert_eq!(lines.next().unwrap(), "0,1.5,1.25,0.5,3,1,0.25");
    }

    fn tiny_graph_dataset(count: usize, seed: u64) -> Vec<Graph> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for k in 0..count {
            let n = 5 + (rng.random::<u64>() % 3) as usize;
            if k % 2 == 0 {
                out.push(generate_clique(n, 3, 0).unwrap());
            } else {
                out.push(generate_ring(n, 3, 1).unwrap());
            }
        }
        out
    }

    fn quick_graph_config() -> TrainConfig {
        let mut cfg = TrainConfig::graph_defaults();
        cfg.epochs = 2;
        cfg.batch_size = 3;
        cfg.embed_dim = 4;
        cfg.attack = AttackConfig::new(1, 0.5, 0.01, 0.05, 0.04).unwrap();
        cfg
    }

    #[test]
    fn graph_training_skips_singleton_batches() {
        let dataset = tiny_graph_dataset(7, 1);
        let cfg = quick_graph_config();
        let out = train_graph_level(&dataset, &cfg).unwrap();
        // 7 graphs in batches of 3 -> sizes 3, 3, 1; the singleton is
        // dropped, so each epoch contributes exactly 2 records.
        assert_eq!(out.log.len(), 2 * cfg.epochs);
    }

    #[test]
    fn graph_training_rejects_tiny_datasets() {
        let dataset = tiny_graph_dataset(1, 2);
        let cfg = quick_graph_config();
        assert!(matches!(train_graph_level(&dataset, &cfg), Err(Error::DegenerateBatch(_))));
    }

    #[test]
    fn graph_level_identical_views_collapse_adv_onto_con() {
        let dataset = tiny_graph_dataset(6, 3);
        let mut cfg = quick_graph_config();
        cfg.epochs = 1;
        cfg.augment1 = AugmentSpec::new(0.0, 0.0).unwrap();
        cfg.attack.steps = 0;
        let out = train_graph_level(&dataset, &cfg).unwrap();
        for r in &out.log.records {
            assert_eq!(r.breakdown.l_con, r.breakdown.l_adv);
            assert_eq!(r.breakdown.l_ir, 0.0);
        }
    }

    #[test]
    fn graph_training_is_reproducible() {
        let dataset = tiny_graph_dataset(6, 4);
        let mut cfg = quick_graph_config();
        cfg.seed = 17;
        let a = train_graph_level(&dataset, &cfg).unwrap();
        let b = train_graph_level(&dataset, &cfg).unwrap();
        for (ra, rb) in a.log.records.iter().zip(&b.log.records) {
            assert_eq!(ra.breakdown, rb.breakdown);
        }
        assert_eq!(a.gin.layers[0].w1, b.gin.layers[0].w1);
    }
}
