//! Runs the PGD attack against a fresh encoder on a small block-model
//! graph: ascends the contrastive loss over relaxed edge flips and bounded
//! feature offsets, then samples a discrete perturbed graph.

use advgcl::adversary::{pgd_attack, AttackConfig, AttackTarget};
use advgcl::contrastive::{node_contrastive_loss, SimilarityConfig};
use advgcl::encoders::{gcn_forward, init_gcn, init_head, Adjacency};
use advgcl::eval::embed;
use advgcl::graph::synthetic::generate_sbm;
use advgcl::graph::{normalize_adjacency, Graph};
use advgcl::numkit::{DenseMatrix, Tape};
use advgcl::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn loss_against(g: &Graph, anchor: &DenseMatrix, gcn: &advgcl::encoders::GcnParams,
                head: &advgcl::encoders::ProjectionHead, sim: &SimilarityConfig) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(anchor.clone());
    let norm = normalize_adjacency(g);
    let x = tape.constant(g.features().clone());
    let bound = gcn.bind(&mut tape, false);
    let h = gcn_forward(&mut tape, &Adjacency::Sparse(&norm), x, &bound)?;
    let bhead = head.bind(&mut tape, false);
    let loss = node_contrastive_loss(&mut tape, a, h, &bhead, sim)?;
    tape.scalar(loss)
}

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let g = generate_sbm(&[8, 8], 0.8, 0.05, 6, 0.1, &mut rng)?;
    println!("clean graph: {} nodes, {} edges", g.n(), g.edge_count());

    let mut init_rng = ChaCha8Rng::seed_from_u64(1);
    let gcn = init_gcn(g.feature_dim(), 32, 16, &mut init_rng)?;
    let head = init_head(16, &mut init_rng)?;
    let sim = SimilarityConfig::new(0.5)?;
    let anchor = embed(&g, &gcn)?;

    println!("loss against the unperturbed graph: {:.4}", loss_against(&g, &anchor, &gcn, &head, &sim)?);

    // 10% edge budget, five ascent steps.
    let cfg = AttackConfig::new(5, 2.0, 0.01, 0.1, 0.5)?;
    let mut attack_rng = ChaCha8Rng::seed_from_u64(3);
    let mut target = AttackTarget::NodeGcn { gcn: &gcn, head: &head };
    let out = pgd_attack(&g, &anchor, &mut target, &sim, &cfg, &mut attack_rng)?;

    println!("relaxed perturbation mass: {:.4}", out.edges.total_mass());
    println!("discrete flips sampled: {}", out.flips.nnz_upper());
    println!("perturbed graph edges: {}", out.graph.edge_count());
    let attacked = loss_against(&out.graph, &anchor, &gcn, &head, &sim)?;
    println!("loss against the adversarial view: {attacked:.4}");

    let mut strongest: Vec<(usize, usize, f64)> = out
        .edges
        .relaxed()
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0.0)
        .map(|(k, &v)| (k / g.n(), k % g.n(), v))
        .filter(|&(i, j, _)| i < j)
        .collect();
    strongest.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
    println!("strongest relaxed entries:");
    for (i, j, v) in strongest.iter().take(5) {
        println!("  ({i}, {j}) -> {v:.4}");
    }
    Ok(())
}
