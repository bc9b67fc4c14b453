//! Graph representation, normalization, augmentation, sampling and batching.

pub mod io;
pub mod synthetic;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numkit::{DenseMatrix, SparseSymmetric};

/// Class annotations: one label per node, or one label for the whole graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Labels {
    Node(Vec<usize>),
    Graph(usize),
}

/// Undirected, unweighted graph with dense node features and optional labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    adjacency: SparseSymmetric,
    features: DenseMatrix,
    labels: Option<Labels>,
    num_classes: Option<usize>,
}

impl Graph {
    /// Validates the graph invariants: binary adjacency with zero diagonal,
    /// one feature row per node, labels consistent with `n` and the class
    /// count.
    pub fn new(
        adjacency: SparseSymmetric,
        features: DenseMatrix,
        labels: Option<Labels>,
        num_classes: Option<usize>,
    ) -> Result<Self> {
        let n = adjacency.n();
        if features.rows() != n {
            return Err(Error::Dimension(format!(
                "feature rows {} != node count {n}",
                features.rows()
            )));
        }
        for &(i, j, v) in adjacency.entries() {
            if i == j {
                return Err(Error::Validation(format!("self-loop at node {i}")));
            }
            if v != 1.0 {
                return Err(Error::Validation(format!(
                    "adjacency entry ({i},{j}) = {v}, expected binary"
                )));
            }
        }
        match &labels {
            Some(Labels::Node(l)) if l.len() != n => {
                return Err(Error::Validation(format!(
                    "{} node labels for {n} nodes",
                    l.len()
                )));
            }
            _ => {}
        }
        if let (Some(labels), Some(c)) = (&labels, num_classes) {
            let max = match labels {
                Labels::Node(l) => l.iter().copied().max().unwrap_or(0),
                Labels::Graph(l) => *l,
            };
            if max >= c {
                return Err(Error::Validation(format!(
                    "label {max} outside declared class count {c}"
                )));
            }
        }
        Ok(Graph { n, adjacency, features, labels, num_classes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn adjacency(&self) -> &SparseSymmetric {
        &self.adjacency
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    pub fn node_labels(&self) -> Option<&[usize]> {
        match &self.labels {
            Some(Labels::Node(l)) => Some(l),
            _ => None,
        }
    }

    pub fn graph_label(&self) -> Option<usize> {
        match &self.labels {
            Some(Labels::Graph(l)) => Some(*l),
            _ => None,
        }
    }

    /// Edge list as upper-triangle pairs `(i, j)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency.entries().iter().map(|&(i, j, _)| (i, j))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.nnz_upper()
    }

    pub fn dense_adjacency(&self) -> DenseMatrix {
        self.adjacency.to_dense()
    }

    /// Rebuilds the graph with node `i` renamed to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n {
            return Err(Error::Dimension("permutation length mismatch".into()));
        }
        let mut seen = vec![false; self.n];
        for &p in perm {
            if p >= self.n || seen[p] {
                return Err(Error::Validation("not a permutation".into()));
            }
            seen[p] = true;
        }
        let entries = self
            .edges()
            .map(|(i, j)| {
                let (a, b) = (perm[i], perm[j]);
                (a.min(b), a.max(b), 1.0)
            })
            .collect();
        let adjacency = SparseSymmetric::new(self.n, entries)?;
        let mut features = DenseMatrix::zeros(self.n, self.feature_dim());
        for i in 0..self.n {
            features.row_mut(perm[i]).copy_from_slice(self.features.row(i));
        }
        let labels = self.labels.clone().map(|l| match l {
            Labels::Node(old) => {
                let mut new = vec![0; self.n];
                for i in 0..self.n {
                    new[perm[i]] = old[i];
                }
                Labels::Node(new)
            }
            Labels::Graph(g) => Labels::Graph(g),
        });
        Graph::new(adjacency, features, labels, self.num_classes)
    }

    fn with_edges_and_features(
        &self,
        edges: Vec<(usize, usize, f64)>,
        features: DenseMatrix,
    ) -> Result<Graph> {
        Graph::new(
            SparseSymmetric::new(self.n, edges)?,
            features,
            self.labels.clone(),
            self.num_classes,
        )
    }
}

/// Per-view augmentation probabilities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentSpec {
    pub p_edge_drop: f64,
    pub p_feature_mask: f64,
}

impl AugmentSpec {
    pub fn new(p_edge_drop: f64, p_feature_mask: f64) -> Result<Self> {
        for p in [p_edge_drop, p_feature_mask] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Validation(format!("probability {p} outside [0,1]")));
            }
        }
        Ok(AugmentSpec { p_edge_drop, p_feature_mask })
    }
}

/// Sampled induced subgraph plus the identities of the kept parent nodes.
#[derive(Clone, Debug)]
pub struct SubgraphSample {
    pub subgraph: Graph,
    pub kept_nodes: Vec<usize>,
}

/// A batch of graphs combined into one block-diagonal graph.
#[derive(Clone, Debug)]
pub struct GraphBatch {
    pub members: Vec<Graph>,
    pub offsets: Vec<usize>,
    pub combined: Graph,
}

impl GraphBatch {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Segment id (graph index) for every combined node, in row order.
    pub fn segments(&self) -> Vec<usize> {
        let mut seg = Vec::with_capacity(self.combined.n());
        for (k, m) in self.members.iter().enumerate() {
            seg.extend(std::iter::repeat(k).take(m.n()));
        }
        seg
    }
}

/// Symmetrically normalized adjacency with self-loops:
/// `D^(-1/2) (A + I) D^(-1/2)` with degrees floored at 1e-12.
pub fn normalize_adjacency(g: &Graph) -> SparseSymmetric {
    let tilde = g
        .adjacency()
        .add_diagonal(1.0)
        .expect("adding self-loops to a valid adjacency cannot fail");
    let s: Vec<f64> = tilde
        .degrees()
        .iter()
        .map(|&d| 1.0 / d.max(1e-12).sqrt())
        .collect();
    tilde
        .scale_bilateral(&s)
        .expect("bilateral scaling with matching length cannot fail")
}

/// Random edge dropping plus whole-column feature masking. Each edge is
/// removed independently with `p_edge_drop`; each feature column is zeroed
/// across all nodes independently with `p_feature_mask`.
pub fn augment(g: &Graph, spec: &AugmentSpec, rng: &mut impl Rng) -> Graph {
    let kept: Vec<(usize, usize, f64)> = g
        .adjacency()
        .entries()
        .iter()
        .filter(|_| rng.random::<f64>() >= spec.p_edge_drop)
        .copied()
        .collect();
    let mut features = g.features().clone();
    for j in 0..features.cols() {
        if rng.random::<f64>() < spec.p_feature_mask {
            for i in 0..features.rows() {
                features.set(i, j, 0.0);
            }
        }
    }
    g.with_edges_and_features(kept, features)
        .expect("augmentation preserves graph invariants")
}

/// Uniformly samples `min(size, n)` nodes without replacement and takes the
/// induced subgraph. Kept nodes are reported in ascending parent order.
pub fn sample_subgraph(g: &Graph, size: usize, rng: &mut impl Rng) -> Result<SubgraphSample> {
    if size == 0 {
        return Err(Error::Validation("subgraph size must be at least 1".into()));
    }
    if size >= g.n() {
        return Ok(SubgraphSample {
            subgraph: g.clone(),
            kept_nodes: (0..g.n()).collect(),
        });
    }
    let mut order: Vec<usize> = (0..g.n()).collect();
    for i in 0..size {
        let j = rng.random_range(i..order.len());
        order.swap(i, j);
    }
    let mut kept: Vec<usize> = order[..size].to_vec();
    kept.sort_unstable();

    let mut new_index = vec![usize::MAX; g.n()];
    for (new, &old) in kept.iter().enumerate() {
        new_index[old] = new;
    }
    let edges: Vec<(usize, usize, f64)> = g
        .edges()
        .filter(|&(i, j)| new_index[i] != usize::MAX && new_index[j] != usize::MAX)
        .map(|(i, j)| (new_index[i], new_index[j], 1.0))
        .collect();
    let mut features = DenseMatrix::zeros(size, g.feature_dim());
    for (new, &old) in kept.iter().enumerate() {
        features.row_mut(new).copy_from_slice(g.features().row(old));
    }
    let labels = g.labels().cloned().map(|l| match l {
        Labels::Node(full) => Labels::Node(kept.iter().map(|&i| full[i]).collect()),
        Labels::Graph(gl) => Labels::Graph(gl),
    });
    let subgraph = Graph::new(SparseSymmetric::new(size, edges)?, features, labels, g.num_classes())?;
    Ok(SubgraphSample { subgraph, kept_nodes: kept })
}

/// Combines graphs into one block-diagonal graph with stacked features.
pub fn combine_batch(graphs: &[Graph]) -> Result<GraphBatch> {
    if graphs.is_empty() {
        return Err(Error::EmptyInput("combine_batch needs at least one graph".into()));
    }
    let d = graphs[0].feature_dim();
    if graphs.iter().any(|g| g.feature_dim() != d) {
        return Err(Error::Dimension("graphs in a batch must share feature width".into()));
    }
    let mut offsets = Vec::with_capacity(graphs.len() + 1);
    offsets.push(0);
    for g in graphs {
        offsets.push(offsets.last().unwrap() + g.n());
    }
    let total = *offsets.last().unwrap();
    let mut edges = Vec::new();
    let mut features = DenseMatrix::zeros(total, d);
    for (k, g) in graphs.iter().enumerate() {
        let base = offsets[k];
        edges.extend(g.edges().map(|(i, j)| (base + i, base + j, 1.0)));
        for i in 0..g.n() {
            features.row_mut(base + i).copy_from_slice(g.features().row(i));
        }
    }
    let combined = Graph::new(SparseSymmetric::new(total, edges)?, features, None, None)?;
    Ok(GraphBatch { members: graphs.to_vec(), offsets, combined })
}

/// One degradation step: drops each surviving edge with probability `p` and
/// masks each still-unmasked feature column with probability `p`. Returns
/// the degraded graph and the updated column mask.
pub fn degrade_step(
    g: &Graph,
    p: f64,
    masked_so_far: &[bool],
    rng: &mut impl Rng,
) -> Result<(Graph, Vec<bool>)> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Validation(format!("probability {p} outside [0,1]")));
    }
    if masked_so_far.len() != g.feature_dim() {
        return Err(Error::Dimension("column mask length mismatch".into()));
    }
    let kept: Vec<(usize, usize, f64)> = g
        .adjacency()
        .entries()
        .iter()
        .filter(|_| rng.random::<f64>() >= p)
        .copied()
        .collect();
    let mut masked = masked_so_far.to_vec();
    let mut features = g.features().clone();
    for (j, m) in masked.iter_mut().enumerate() {
        if !*m && rng.random::<f64>() < p {
            *m = true;
        }
        if *m {
            for i in 0..features.rows() {
                features.set(i, j, 0.0);
            }
        }
    }
    Ok((g.with_edges_and_features(kept, features)?, masked))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_node_edge() -> Graph {
        Graph::new(
            SparseSymmetric::new(2, vec![(0, 1, 1.0)]).unwrap(),
            DenseMatrix::identity(2),
            None,
            None,
        )
        .unwrap()
    }

    fn random_graph(n: usize, p: f64, d: usize, rng: &mut ChaCha8Rng) -> Graph {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j, 1.0));
                }
            }
        }
        let features = DenseMatrix::from_vec(
            n,
            d,
            (0..n * d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
        )
        .unwrap();
        Graph::new(SparseSymmetric::new(n, edges).unwrap(), features, None, None).unwrap()
    }

    #[test]
    fn rejects_self_loops_and_weights() {
        let loops = SparseSymmetric::new(2, vec![(0, 0, 1.0)]).unwrap();
        assert!(Graph::new(loops, DenseMatrix::zeros(2, 1), None, None).is_err());
        let weighted = SparseSymmetric::new(2, vec![(0, 1, 0.5)]).unwrap();
        assert!(Graph::new(weighted, DenseMatrix::zeros(2, 1), None, None).is_err());
    }

    #[test]
    fn normalize_two_node_single_edge() {
        let a_hat = normalize_adjacency(&two_node_edge());
        let dense = a_hat.to_dense();
        for i in 0..2 {
            for j in 0..2 {
                assert!((dense.at(i, j) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalize_edgeless_graph_is_identity() {
        let g = Graph::new(
            SparseSymmetric::new(3, vec![]).unwrap(),
            DenseMatrix::zeros(3, 1),
            None,
            None,
        )
        .unwrap();
        assert_eq!(normalize_adjacency(&g).to_dense(), DenseMatrix::identity(3));
    }

    #[test]
    fn normalize_reconstructs_tilde_adjacency() {
        // Scaling A^ back by D^(1/2) on both sides must recover A + I.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_graph(6, 0.5, 3, &mut rng);
        let tilde = g.adjacency().add_diagonal(1.0).unwrap();
        let sqrt_deg: Vec<f64> = tilde.degrees().iter().map(|d| d.sqrt()).collect();
        let recon = normalize_adjacency(&g).scale_bilateral(&sqrt_deg).unwrap();
        let (a, b) = (recon.to_dense(), tilde.to_dense());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn augment_with_zero_probabilities_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = random_graph(8, 0.4, 3, &mut rng);
        let spec = AugmentSpec::new(0.0, 0.0).unwrap();
        assert_eq!(augment(&g, &spec, &mut rng), g);
    }

    #[test]
    fn augment_with_full_drop_removes_all_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = random_graph(8, 0.6, 3, &mut rng);
        let spec = AugmentSpec::new(1.0, 0.0).unwrap();
        assert_eq!(augment(&g, &spec, &mut rng).edge_count(), 0);
    }

    #[test]
    fn augment_never_adds_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..20 {
            let g = random_graph(10, 0.5, 2, &mut rng);
            let spec = AugmentSpec::new(0.3, 0.3).unwrap();
            let mut arng = ChaCha8Rng::seed_from_u64(seed);
            let out = augment(&g, &spec, &mut arng);
            let parent: std::collections::HashSet<_> = g.edges().collect();
            assert!(out.edges().all(|e| parent.contains(&e)));
        }
    }

    #[test]
    fn augment_edge_retention_is_binomial() {
        // 200 edges kept with probability 0.7: mean over 1000 seeds should
        // land within 3 sigma of 140 (sigma of the mean ~ 0.2).
        let n = 201;
        let edges: Vec<_> = (0..200).map(|i| (i, i + 1, 1.0)).collect();
        let g = Graph::new(
            SparseSymmetric::new(n, edges).unwrap(),
            DenseMatrix::zeros(n, 1),
            None,
            None,
        )
        .unwrap();
        let spec = AugmentSpec::new(0.3, 0.0).unwrap();
        let mut total = 0usize;
        for seed in 0..1000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            total += augment(&g, &spec, &mut rng).edge_count();
        }
        let mean = total as f64 / 1000.0;
        let sigma_mean = (200.0f64 * 0.7 * 0.3).sqrt() / 1000.0f64.sqrt();
        assert!((mean - 140.0).abs() < 3.0 * sigma_mean, "mean {mean}");
    }

    #[test]
    fn sample_subgraph_full_size_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_graph(7, 0.4, 2, &mut rng);
        let s = sample_subgraph(&g, 7, &mut rng).unwrap();
        assert_eq!(s.subgraph, g);
        assert_eq!(s.kept_nodes, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn sample_subgraph_single_node_has_no_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_graph(7, 0.9, 2, &mut rng);
        let s = sample_subgraph(&g, 1, &mut rng).unwrap();
        assert_eq!(s.subgraph.n(), 1);
        assert_eq!(s.subgraph.edge_count(), 0);
    }

    #[test]
    fn sample_subgraph_of_complete_graph_is_complete() {
        let edges: Vec<_> = (0..5)
            .flat_map(|i| ((i + 1)..5).map(move |j| (i, j, 1.0)))
            .collect();
        let g = Graph::new(
            SparseSymmetric::new(5, edges).unwrap(),
            DenseMatrix::zeros(5, 2),
            None,
            None,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = sample_subgraph(&g, 3, &mut rng).unwrap();
        assert_eq!(s.subgraph.edge_count(), 3);
    }

    #[test]
    fn sample_subgraph_matches_brute_force_induction() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let g = random_graph(12, 0.4, 2, &mut rng);
            let s = sample_subgraph(&g, 6, &mut rng).unwrap();
            let kept = &s.kept_nodes;
            let mut expected = Vec::new();
            for (a, &i) in kept.iter().enumerate() {
                for (b, &j) in kept.iter().enumerate().skip(a + 1) {
                    let (lo, hi) = (i.min(j), i.max(j));
                    if g.edges().any(|e| e == (lo, hi)) {
                        expected.push((a, b));
                    }
                }
            }
            let got: Vec<_> = s.subgraph.edges().collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn combine_batch_is_block_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_graph(2, 1.0, 3, &mut rng);
        let b = random_graph(3, 0.5, 3, &mut rng);
        let batch = combine_batch(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(batch.combined.n(), 5);
        assert_eq!(batch.offsets, vec![0, 2, 5]);
        assert_eq!(batch.combined.edge_count(), a.edge_count() + b.edge_count());
        assert!(batch.combined.edges().all(|(i, j)| (j < 2) == (i < 2)));
        assert_eq!(batch.segments(), vec![0, 0, 1, 1, 1]);
    }

    #[test]
    fn combine_batch_slicing_recovers_members() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let graphs: Vec<_> = (0..4).map(|_| random_graph(5, 0.4, 2, &mut rng)).collect();
        let batch = combine_batch(&graphs).unwrap();
        for (k, g) in graphs.iter().enumerate() {
            let base = batch.offsets[k];
            let edges: Vec<_> = batch
                .combined
                .edges()
                .filter(|&(i, j)| i >= base && j < base + g.n())
                .map(|(i, j)| (i - base, j - base))
                .collect();
            assert_eq!(edges, g.edges().collect::<Vec<_>>());
            for i in 0..g.n() {
                assert_eq!(batch.combined.features().row(base + i), g.features().row(i));
            }
        }
    }

    #[test]
    fn degrade_step_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = random_graph(20, 0.5, 6, &mut rng);
        let mut masked = vec![false; 6];
        let mut prev_edges = g.edge_count();
        let mut prev_unmasked = 6;
        for _ in 0..30 {
            let (next, m) = degrade_step(&g, 0.1, &masked, &mut rng).unwrap();
            let unmasked = m.iter().filter(|&&b| !b).count();
            assert!(next.edge_count() <= prev_edges);
            assert!(unmasked <= prev_unmasked);
            prev_edges = next.edge_count();
            prev_unmasked = unmasked;
            g = next;
            masked = m;
        }
    }

    #[test]
    fn degrade_step_zero_probability_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = random_graph(10, 0.5, 3, &mut rng);
        let (out, masked) = degrade_step(&g, 0.0, &vec![false; 3], &mut rng).unwrap();
        assert_eq!(out, g);
        assert_eq!(masked, vec![false; 3]);
    }

    #[test]
    fn fully_masked_features_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = random_graph(6, 0.5, 3, &mut rng);
        let (out, masked) = degrade_step(&g, 1.0, &vec![false; 3], &mut rng).unwrap();
        assert!(masked.iter().all(|&b| b));
        assert!(out.features().values().iter().all(|&v| v == 0.0));
        assert_eq!(out.edge_count(), 0);
    }

    #[test]
    fn permuted_graph_keeps_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = random_graph(6, 0.5, 2, &mut rng);
        let perm = vec![3, 1, 5, 0, 2, 4];
        let p = g.permuted(&perm).unwrap();
        assert_eq!(p.edge_count(), g.edge_count());
        for (i, j) in g.edges() {
            let (a, b) = (perm[i].min(perm[j]), perm[i].max(perm[j]));
            assert!(p.edges().any(|e| e == (a, b)));
        }
        for i in 0..6 {
            assert_eq!(p.features().row(perm[i]), g.features().row(i));
        }
    }
}
