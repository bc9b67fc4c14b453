//! Synthetic graph generators for desk-scale experiments.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Labels};
use crate::numkit::{DenseMatrix, SparseSymmetric};

/// Stochastic block model with labeled nodes. Each intra-block pair is
/// connected with probability `p_in`, each inter-block pair with `p_out`.
/// Features are the one-hot block indicator padded to `feature_dim`, plus
/// independent uniform noise in `[-feature_noise, feature_noise]` on every
/// entry.
pub fn generate_sbm(
    block_sizes: &[usize],
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    feature_noise: f64,
    rng: &mut impl Rng,
) -> Result<Graph> {
    if block_sizes.is_empty() || block_sizes.contains(&0) {
        return Err(Error::Validation("block sizes must be positive".into()));
    }
    for p in [p_in, p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Validation(format!("probability {p} outside [0,1]")));
        }
    }
    if p_in <= p_out {
        return Err(Error::Validation(format!(
            "p_in ({p_in}) must exceed p_out ({p_out})"
        )));
    }
    if feature_dim < block_sizes.len() {
        return Err(Error::Dimension(format!(
            "feature_dim {feature_dim} cannot hold {} block indicators",
            block_sizes.len()
        )));
    }
    if feature_noise < 0.0 {
        return Err(Error::Validation("feature_noise must be non-negative".into()));
    }

    let n: usize = block_sizes.iter().sum();
    let mut block_of = Vec::with_capacity(n);
    for (b, &size) in block_sizes.iter().enumerate() {
        block_of.extend(std::iter::repeat(b).take(size));
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if block_of[i] == block_of[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j, 1.0));
            }
        }
    }

    let mut features = DenseMatrix::zeros(n, feature_dim);
    for i in 0..n {
        for j in 0..feature_dim {
            let indicator = if j == block_of[i] { 1.0 } else { 0.0 };
            let noise = if feature_noise > 0.0 {
                (rng.random::<f64>() * 2.0 - 1.0) * feature_noise
            } else {
                0.0
            };
            features.set(i, j, indicator + noise);
        }
    }

    Graph::new(
        SparseSymmetric::new(n, edges)?,
        features,
        Some(Labels::Node(block_of)),
        Some(block_sizes.len()),
    )
}

/// Complete graph on `n` nodes with all-ones features and a graph label.
pub fn generate_clique(n: usize, feature_dim: usize, label: usize) -> Result<Graph> {
    if n < 2 {
        return Err(Error::Validation("clique needs at least 2 nodes".into()));
    }
    let edges: Vec<_> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j, 1.0)))
        .collect();
    Graph::new(
        SparseSymmetric::new(n, edges)?,
        DenseMatrix::filled(n, feature_dim, 1.0),
        Some(Labels::Graph(label)),
        None,
    )
}

/// Cycle graph on `n` nodes with all-ones features and a graph label.
pub fn generate_ring(n: usize, feature_dim: usize, label: usize) -> Result<Graph> {
    if n < 3 {
        return Err(Error::Validation("ring needs at least 3 nodes".into()));
    }
    let mut edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
    edges.push((0, n - 1, 1.0));
    Graph::new(
        SparseSymmetric::new(n, edges)?,
        DenseMatrix::filled(n, feature_dim, 1.0),
        Some(Labels::Graph(label)),
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn extreme_probabilities_make_disjoint_cliques() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = generate_sbm(&[4, 3], 1.0, 0.0, 2, 0.0, &mut rng).unwrap();
        assert_eq!(g.edge_count(), 6 + 3);
        let labels = g.node_labels().unwrap();
        assert!(g.edges().all(|(i, j)| labels[i] == labels[j]));
    }

    #[test]
    fn zero_noise_gives_exact_indicators() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = generate_sbm(&[3, 3], 0.5, 0.1, 4, 0.0, &mut rng).unwrap();
        let labels = g.node_labels().unwrap();
        for i in 0..g.n() {
            for j in 0..4 {
                let expect = if j == labels[i] { 1.0 } else { 0.0 };
                assert_eq!(g.features().at(i, j), expect);
            }
        }
    }

    #[test]
    fn edge_counts_match_binomial_means() {
        // Two blocks of 50 at p_in 0.2, p_out 0.02: expected intra edges
        // 2*C(50,2)*0.2 = 490, inter 50*50*0.02 = 50. Averages over 200
        // seeds must land within 3 sigma of the mean.
        let mut intra_total = 0.0;
        let mut inter_total = 0.0;
        let runs = 200;
        for seed in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = generate_sbm(&[50, 50], 0.2, 0.02, 2, 0.0, &mut rng).unwrap();
            let labels = g.node_labels().unwrap();
            for (i, j) in g.edges() {
                if labels[i] == labels[j] {
                    intra_total += 1.0;
                } else {
                    inter_total += 1.0;
                }
            }
        }
        let intra_mean = intra_total / runs as f64;
        let inter_mean = inter_total / runs as f64;
        let intra_sigma = (2450.0f64 * 0.2 * 0.8).sqrt() / (runs as f64).sqrt();
        let inter_sigma = (2500.0f64 * 0.02 * 0.98).sqrt() / (runs as f64).sqrt();
        assert!((intra_mean - 490.0).abs() < 3.0 * intra_sigma, "intra {intra_mean}");
        assert!((inter_mean - 50.0).abs() < 3.0 * inter_sigma, "inter {inter_mean}");
    }

    #[test]
    fn rejects_inverted_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_sbm(&[5, 5], 0.1, 0.1, 2, 0.0, &mut rng).is_err());
        assert!(generate_sbm(&[5, 5], 0.1, 0.3, 2, 0.0, &mut rng).is_err());
    }

    #[test]
    fn rejects_narrow_feature_dim() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_sbm(&[5, 5, 5], 0.5, 0.1, 2, 0.0, &mut rng).is_err());
    }

    #[test]
    fn clique_and_ring_shapes() {
        let c = generate_clique(5, 3, 0).unwrap();
        assert_eq!(c.edge_count(), 10);
        assert_eq!(c.graph_label(), Some(0));
        let r = generate_ring(6, 3, 1).unwrap();
        assert_eq!(r.edge_count(), 6);
        assert!(r.adjacency().degrees().iter().all(|&d| d == 2.0));
    }
}
