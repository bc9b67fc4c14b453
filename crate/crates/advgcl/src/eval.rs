//! Embedding extraction, random splits, logistic-regression probes over
//! frozen embeddings, and the structural degradation study that tracks how
//! fast embeddings drift as edges and feature columns are removed.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::encoders::{gcn_forward, gin_forward, readout, Adjacency, BnMode, GcnParams, GinParams};
use crate::error::{Error, Result};
use crate::graph::{degrade_step, normalize_adjacency, Graph};
use crate::numkit::{DenseMatrix, Tape};

/// Disjoint covering index partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` and carves off `floor(train_frac * n)` training and
/// `floor(valid_frac * n)` validation indices; the rest is the test set.
pub fn random_split(
    n: usize,
    train_frac: f64,
    valid_frac: f64,
    rng: &mut impl Rng,
) -> Result<Split> {
    if n < 10 {
        return Err(Error::DegenerateSplit(format!("need at least 10 points, got {n}")));
    }
    for f in [train_frac, valid_frac] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::Validation(format!("split fraction {f} outside [0,1]")));
        }
    }
    if train_frac + valid_frac > 1.0 {
        return Err(Error::Validation(format!(
            "split fractions sum to {} > 1",
            train_frac + valid_frac
        )));
    }
    let n_train = (train_frac * n as f64).floor() as usize;
    let n_valid = (valid_frac * n as f64).floor() as usize;
    if n_train == 0 || n_valid == 0 || n_train + n_valid >= n {
        return Err(Error::DegenerateSplit(format!(
            "fractions {train_frac}/{valid_frac} leave an empty part at n={n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ok(Split {
        train: order[..n_train].to_vec(),
        valid: order[n_train..n_train + n_valid].to_vec(),
        test: order[n_train + n_valid..].to_vec(),
    })
}

/// Node embeddings of the full graph: normalized adjacency, no projection
/// head, no gradient tracking.
pub fn embed(g: &Graph, gcn: &GcnParams) -> Result<DenseMatrix> {
    let norm = normalize_adjacency(g);
    let mut tape = Tape::new();
    let x = tape.constant(g.features().clone());
    let bound = gcn.bind(&mut tape, false);
    let h = gcn_forward(&mut tape, &Adjacency::Sparse(&norm), x, &bound)?;
    Ok(tape.value(h).clone())
}

/// One readout row per dataset graph, batch norm on running statistics.
/// The parameters are cloned internally so repeated calls cannot drift.
pub fn embed_graphs(dataset: &[Graph], gin: &GinParams) -> Result<DenseMatrix> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("no graphs to embed".into()));
    }
    let mut gin = gin.clone();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dataset.len());
    for g in dataset {
        let mut tape = Tape::new();
        let x = tape.constant(g.features().clone());
        let bound = gin.bind(&mut tape, false);
        let out = gin_forward(
            &mut tape,
            &Adjacency::Sparse(g.adjacency()),
            x,
            &mut gin,
            &bound,
            BnMode::Eval,
        )?;
        let segments = vec![0usize; g.n()];
        let r = readout(&mut tape, &out.per_layer, &segments, 1)?;
        rows.push(tape.value(r).row(0).to_vec());
    }
    DenseMatrix::from_rows(&rows)
}

/// L2 penalties tried by the probe, selected on validation accuracy.
pub const PROBE_L2_GRID: [f64; 4] = [1e-4, 1e-3, 1e-2, 1e-1];
pub const PROBE_ITERATIONS: usize = 300;
pub const PROBE_LEARNING_RATE: f64 = 0.5;

/// Per-column affine transform fitted on the training rows only.
struct Standardizer {
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Standardizer {
    fn fit(h: &DenseMatrix, rows: &[usize]) -> Self {
        let d = h.cols();
        let m = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &i in rows {
            for (j, v) in h.row(i).iter().enumerate() {
                mean[j] += v;
            }
        }
        for v in &mut mean {
            *v /= m;
        }
        let mut var = vec![0.0; d];
        for &i in rows {
            for (j, v) in h.row(i).iter().enumerate() {
                let c = v - mean[j];
                var[j] += c * c;
            }
        }
        let inv_std = var.iter().map(|&v| 1.0 / (v / m).sqrt().max(1e-12)).collect();
        Standardizer { mean, inv_std }
    }

    fn apply(&self, h: &DenseMatrix) -> DenseMatrix {
        let mut out = h.clone();
        for i in 0..out.rows() {
            let row = out.row_mut(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) * self.inv_std[j];
            }
        }
        out
    }
}

fn gather_rows(h: &DenseMatrix, rows: &[usize]) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(rows.len(), h.cols());
    for (k, &i) in rows.iter().enumerate() {
        out.row_mut(k).copy_from_slice(h.row(i));
    }
    out
}

/// Multinomial logistic regression by full-batch gradient descent with an
/// L2 penalty on the weights (not the intercept). Deterministic: weights
/// start at zero.
pub fn fit_logistic(
    x: &DenseMatrix,
    y: &[usize],
    num_classes: usize,
    l2: f64,
    iterations: usize,
    learning_rate: f64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if x.rows() != y.len() {
        return Err(Error::Dimension(format!(
            "{} feature rows vs {} labels",
            x.rows(),
            y.len()
        )));
    }
    if num_classes < 2 {
        return Err(Error::Validation(format!("need at least 2 classes, got {num_classes}")));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= num_classes) {
        return Err(Error::Validation(format!("label {bad} outside 0..{num_classes}")));
    }
    let m = x.rows();
    let d = x.cols();
    let mut w = DenseMatrix::zeros(d, num_classes);
    let mut b = DenseMatrix::zeros(1, num_classes);
    let inv_m = 1.0 / m as f64;
    for _ in 0..iterations {
        let mut probs = x.matmul(&w)?;
        for i in 0..m {
            let row = probs.row_mut(i);
            let mut max = f64::NEG_INFINITY;
            for (c, v) in row.iter_mut().enumerate() {
                *v += b.at(0, c);
                max = max.max(*v);
            }
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
            row[y[i]] -= 1.0;
        }
        let grad_w = x.transpose().matmul(&probs)?.scale(inv_m).add(&w.scale(l2))?;
        let mut grad_b = DenseMatrix::zeros(1, num_classes);
        for i in 0..m {
            for (c, v) in probs.row(i).iter().enumerate() {
                grad_b.set(0, c, grad_b.at(0, c) + v * inv_m);
            }
        }
        w.add_assign(&grad_w.scale(-learning_rate));
        b.add_assign(&grad_b.scale(-learning_rate));
    }
    Ok((w, b))
}

fn predict(x: &DenseMatrix, w: &DenseMatrix, b: &DenseMatrix) -> Result<Vec<usize>> {
    let logits = x.matmul(w)?;
    let mut out = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for (c, v) in logits.row(i).iter().enumerate() {
            let v = v + b.at(0, c);
            if v > best_v {
                best_v = v;
                best = c;
            }
        }
        out.push(best);
    }
    Ok(out)
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

/// Trains a probe on the train indices, picks the L2 penalty by validation
/// accuracy, and reports test accuracy. Test labels are only touched in the
/// final scoring pass.
pub fn linear_probe(
    h: &DenseMatrix,
    labels: &[usize],
    num_classes: usize,
    split: &Split,
    grid: &[f64],
) -> Result<f64> {
    if h.rows() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} embedding rows vs {} labels",
            h.rows(),
            labels.len()
        )));
    }
    if grid.is_empty() {
        return Err(Error::Validation("empty penalty grid".into()));
    }
    let train_y: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let first = train_y[0];
    if train_y.iter().all(|&c| c == first) {
        return Err(Error::DegenerateSplit("training split covers a single class".into()));
    }
    let std = Standardizer::fit(h, &split.train);
    let hs = std.apply(h);
    let x_train = gather_rows(&hs, &split.train);
    let x_valid = gather_rows(&hs, &split.valid);
    let valid_y: Vec<usize> = split.valid.iter().map(|&i| labels[i]).collect();

    let mut best: Option<(f64, DenseMatrix, DenseMatrix)> = None;
    for &l2 in grid {
        let (w, b) = fit_logistic(
            &x_train,
            &train_y,
            num_classes,
            l2,
            PROBE_ITERATIONS,
            PROBE_LEARNING_RATE,
        )?;
        let acc = accuracy(&predict(&x_valid, &w, &b)?, &valid_y);
        if best.as_ref().map_or(true, |(a, _, _)| acc > *a) {
            best = Some((acc, w, b));
        }
    }
    let (_, w, b) = best.expect("non-empty grid");
    let x_test = gather_rows(&hs, &split.test);
    let test_y: Vec<usize> = split.test.iter().map(|&i| labels[i]).collect();
    Ok(accuracy(&predict(&x_test, &w, &b)?, &test_y))
}

/// Aggregate probe accuracy over repeated random splits.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub dataset: String,
    pub seed: u64,
    pub repetitions: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub per_split: Vec<f64>,
    #[serde(skip)]
    pub probe_grid: Vec<f64>,
    #[serde(skip)]
    pub probe_iterations: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Probes `repetitions` independent 10/10/80 splits and aggregates.
pub fn evaluate(
    h: &DenseMatrix,
    labels: &[usize],
    num_classes: usize,
    dataset: &str,
    seed: u64,
    repetitions: usize,
) -> Result<EvalReport> {
    if repetitions == 0 {
        return Err(Error::Validation("need at least one repetition".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_split = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let split = random_split(h.rows(), 0.1, 0.1, &mut rng)?;
        per_split.push(linear_probe(h, labels, num_classes, &split, &PROBE_L2_GRID)?);
    }
    let (accuracy_mean, accuracy_std) = mean_std(&per_split);
    Ok(EvalReport {
        dataset: dataset.to_string(),
        seed,
        repetitions,
        accuracy_mean,
        accuracy_std,
        per_split,
        probe_grid: PROBE_L2_GRID.to_vec(),
        probe_iterations: PROBE_ITERATIONS,
    })
}

/// K-fold probe with a fixed penalty: each fold serves once as the test
/// set while the others train. Returns mean test accuracy.
pub fn kfold_probe(
    h: &DenseMatrix,
    labels: &[usize],
    num_classes: usize,
    k: usize,
    l2: f64,
    rng: &mut impl Rng,
) -> Result<f64> {
    let n = h.rows();
    if k < 2 || k > n {
        return Err(Error::Validation(format!("fold count {k} invalid for {n} points")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut accs = Vec::with_capacity(k);
    for fold in 0..k {
        let test: Vec<usize> = order.iter().copied().skip(fold).step_by(k).collect();
        let train: Vec<usize> =
            order.iter().copied().filter(|i| !test.contains(i)).collect();
        let train_y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let first = train_y[0];
        if train_y.iter().all(|&c| c == first) {
            return Err(Error::DegenerateSplit("fold trains on a single class".into()));
        }
        let std = Standardizer::fit(h, &train);
        let hs = std.apply(h);
        let (w, b) = fit_logistic(
            &gather_rows(&hs, &train),
            &train_y,
            num_classes,
            l2,
            PROBE_ITERATIONS,
            PROBE_LEARNING_RATE,
        )?;
        let test_y: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
        accs.push(accuracy(&predict(&gather_rows(&hs, &test), &w, &b)?, &test_y));
    }
    Ok(accs.iter().sum::<f64>() / k as f64)
}

/// One degradation step's similarity statistics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VulnerabilityRow {
    pub step: usize,
    pub mean: f64,
    pub std: f64,
    /// Expected surviving fraction `(1 - p)^step`, not the realized count.
    pub edge_retention: f64,
}

#[derive(Clone, Debug, Default)]
pub struct VulnerabilityCurve {
    pub rows: Vec<VulnerabilityRow>,
}

impl VulnerabilityCurve {
    /// CSV with header `step,mean,std,edge_retention`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,mean,std,edge_retention\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.step, r.mean, r.std, r.edge_retention));
        }
        out
    }
}

fn cosine_rows(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 1.0;
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let na = na.sqrt();
    let nb = nb.sqrt();
    if na <= 1e-12 && nb <= 1e-12 {
        return 1.0;
    }
    if na <= 1e-12 || nb <= 1e-12 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Repeatedly removes each surviving edge with probability `p` and zeroes
/// each surviving feature column with probability `p`, cumulatively, and
/// tracks per-node cosine similarity between current and original
/// embeddings. Row 0 is the undamaged graph: exactly (1, 0, 1).
pub fn vulnerability_study(
    g: &Graph,
    embed_fn: impl Fn(&Graph) -> Result<DenseMatrix>,
    p: f64,
    steps: usize,
    rng: &mut impl Rng,
) -> Result<VulnerabilityCurve> {
    let h0 = embed_fn(g)?;
    if h0.rows() != g.n() {
        return Err(Error::Dimension(format!(
            "embedding has {} rows for {} nodes",
            h0.rows(),
            g.n()
        )));
    }
    let mut curve = VulnerabilityCurve::default();
    curve.rows.push(VulnerabilityRow { step: 0, mean: 1.0, std: 0.0, edge_retention: 1.0 });
    let mut current = g.clone();
    let mut masked = vec![false; g.feature_dim()];
    for t in 1..=steps {
        let (next, next_masked) = degrade_step(&current, p, &masked, rng)?;
        current = next;
        masked = next_masked;
        let ht = embed_fn(&current)?;
        if ht.shape() != h0.shape() {
            return Err(Error::Dimension("embedding shape changed between steps".into()));
        }
        let sims: Vec<f64> =
            (0..g.n()).map(|i| cosine_rows(ht.row(i), h0.row(i))).collect();
        let (mean, std) = mean_std(&sims);
        curve.rows.push(VulnerabilityRow {
            step: t,
            mean,
            std,
            edge_retention: (1.0 - p).powi(t as i32),
        });
    }
    Ok(curve)
}

/// Spearman rank correlation between two equal-length sequences; used to
/// verify that similarity decays monotonically with degradation.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Validation("correlation needs two equal sequences of >= 2".into()));
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let (ma, _) = mean_std(&ra);
    let (mb, _) = mean_std(&rb);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return Err(Error::Numeric("constant sequence has no rank correlation".into()));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// Average ranks (ties share the mean rank), 1-based.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).expect("finite values"));
    let mut out = vec![0.0; values.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut j = k;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[k]] {
            j += 1;
        }
        let avg = (k + j) as f64 / 2.0 + 1.0;
        for &i in &idx[k..=j] {
            out[i] = avg;
        }
        k = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{init_gcn, init_gin, Activation};
    use crate::graph::synthetic::generate_sbm;
    use crate::numkit::SparseSymmetric;

    fn seeded(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn path_graph(n: usize, d: usize) -> Graph {
        let edges: Vec<(usize, usize, f64)> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        let mut rng = seeded(99);
        let feats = DenseMatrix::from_vec(
            n,
            d,
            (0..n * d).map(|_| rng.random::<f64>()).collect(),
        )
        .unwrap();
        Graph::new(SparseSymmetric::new(n, edges).unwrap(), feats, None, None).unwrap()
    }

    #[test]
    fn split_sizes_follow_fractions() {
        let s = random_split(100, 0.1, 0.1, &mut seeded(0)).unwrap();
        assert_eq!(s.train.len(), 10);
        assert_eq!(s.valid.len(), 10);
        assert_eq!(s.test.len(), 80);
    }

    #[test]
    fn split_is_disjoint_and_covering() {
        let s = random_split(57, 0.2, 0.1, &mut seeded(1)).unwrap();
        let mut all: Vec<usize> =
            s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..57).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let a = random_split(40, 0.1, 0.1, &mut seeded(7)).unwrap();
        let b = random_split(40, 0.1, 0.1, &mut seeded(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_rejects_tiny_inputs() {
        assert!(matches!(
            random_split(9, 0.1, 0.1, &mut seeded(0)),
            Err(Error::DegenerateSplit(_))
        ));
    }

    #[test]
    fn split_train_frequency_is_uniform() {
        let mut hits = 0usize;
        let trials = 1000;
        for seed in 0..trials {
            let s = random_split(50, 0.1, 0.1, &mut seeded(seed)).unwrap();
            if s.train.contains(&0) {
                hits += 1;
            }
        }
        let freq = hits as f64 / trials as f64;
        let sigma = (0.1f64 * 0.9 / trials as f64).sqrt();
        assert!(
            (freq - 0.1).abs() <= 3.0 * sigma,
            "frequency {freq} outside 0.1 +- {}",
            3.0 * sigma
        );
    }

    #[test]
    fn zero_weight_encoder_embeds_to_zero() {
        let g = path_graph(6, 3);
        let mut gcn = init_gcn(3, 4, 2, &mut seeded(0)).unwrap();
        gcn.w1 = DenseMatrix::zeros(3, 4);
        gcn.w2 = DenseMatrix::zeros(4, 2);
        let h = embed(&g, &gcn).unwrap();
        assert_eq!(h, DenseMatrix::zeros(6, 2));
    }

    #[test]
    fn embed_is_deterministic() {
        let g = path_graph(6, 3);
        let gcn = init_gcn(3, 4, 2, &mut seeded(3)).unwrap();
        assert_eq!(embed(&g, &gcn).unwrap(), embed(&g, &gcn).unwrap());
    }

    #[test]
    fn embed_graphs_eval_mode_is_repeatable() {
        let mut rng = seeded(4);
        let graphs = vec![
            generate_sbm(&[4, 4], 0.9, 0.1, 3, 0.1, &mut rng).unwrap(),
            generate_sbm(&[5, 3], 0.9, 0.1, 3, 0.1, &mut rng).unwrap(),
        ];
        let gin = init_gin(3, 4, &mut seeded(5)).unwrap();
        let a = embed_graphs(&graphs, &gin).unwrap();
        let b = embed_graphs(&graphs, &gin).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.shape(), (2, 12));
    }

    #[test]
    fn permuting_nodes_permutes_embedding_rows() {
        let g = path_graph(5, 3);
        let perm = [2usize, 0, 4, 1, 3];
        let edges: Vec<(usize, usize, f64)> = g
            .edges()
            .map(|(i, j)| (perm[i].min(perm[j]), perm[i].max(perm[j]), 1.0))
            .collect();
        let mut feats = DenseMatrix::zeros(5, 3);
        for i in 0..5 {
            feats.row_mut(perm[i]).copy_from_slice(g.features().row(i));
        }
        let gp = Graph::new(
            SparseSymmetric::new(5, edges).unwrap(),
            feats,
            None,
            None,
        )
        .unwrap();
        let gcn = init_gcn(3, 4, 2, &mut seeded(6)).unwrap();
        let h = embed(&g, &gcn).unwrap();
        let hp = embed(&gp, &gcn).unwrap();
        for i in 0..5 {
            for j in 0..2 {
                assert!(
                    (h.at(i, j) - hp.at(perm[i], j)).abs() < 1e-12,
                    "row {i} col {j}"
                );
            }
        }
    }

    fn clustered_embeddings(n: usize, noise: f64, seed: u64) -> (DenseMatrix, Vec<usize>) {
        let mut rng = seeded(seed);
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % 2;
            let base = if c == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
            rows.push(vec![
                base[0] + noise * (rng.random::<f64>() - 0.5),
                base[1] + noise * (rng.random::<f64>() - 0.5),
            ]);
            labels.push(c);
        }
        (DenseMatrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separable_classes_probe_to_full_accuracy() {
        let (h, labels) = clustered_embeddings(100, 0.2, 8);
        let split = random_split(100, 0.2, 0.1, &mut seeded(9)).unwrap();
        let acc = linear_probe(&h, &labels, 2, &split, &PROBE_L2_GRID).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn independent_labels_probe_to_chance() {
        let mut rng = seeded(10);
        let n = 1250;
        let h = DenseMatrix::from_vec(
            n,
            4,
            (0..n * 4).map(|_| rng.random::<f64>()).collect(),
        )
        .unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let split = random_split(n, 0.1, 0.1, &mut seeded(11)).unwrap();
        let acc = linear_probe(&h, &labels, 2, &split, &PROBE_L2_GRID).unwrap();
        let sigma = 0.5 / (split.test.len() as f64).sqrt();
        assert!(
            (acc - 0.5).abs() <= 3.0 * sigma,
            "accuracy {acc} outside 0.5 +- {}",
            3.0 * sigma
        );
    }

    #[test]
    fn one_hot_embeddings_recover_labels() {
        let n = 60;
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let mut h = DenseMatrix::zeros(n, 3);
        for (i, &c) in labels.iter().enumerate() {
            h.set(i, c, 1.0);
        }
        let split = random_split(n, 0.2, 0.2, &mut seeded(12)).unwrap();
        let acc = linear_probe(&h, &labels, 3, &split, &PROBE_L2_GRID).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn single_class_train_split_is_rejected() {
        let (h, _) = clustered_embeddings(40, 0.1, 13);
        let labels = vec![0usize; 40];
        let split = random_split(40, 0.2, 0.2, &mut seeded(14)).unwrap();
        assert!(matches!(
            linear_probe(&h, &labels, 2, &split, &PROBE_L2_GRID),
            Err(Error::DegenerateSplit(_))
        ));
    }

    #[test]
    fn report_aggregates_match_per_split_values() {
        let (h, labels) = clustered_embeddings(80, 0.3, 15);
        let report = evaluate(&h, &labels, 2, "toy", 21, 5).unwrap();
        assert_eq!(report.per_split.len(), 5);
        let (mean, std) = mean_std(&report.per_split);
        assert_eq!(report.accuracy_mean, mean);
        assert_eq!(report.accuracy_std, std);
        assert!(report.per_split.iter().all(|a| (0.0..=1.0).contains(a)));
    }

    #[test]
    fn report_json_has_exactly_the_contract_keys() {
        let (h, labels) = clustered_embeddings(80, 0.3, 16);
        let report = evaluate(&h, &labels, 2, "toy", 3, 1).unwrap();
        assert_eq!(report.per_split.len(), 1);
        let parsed: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        let obj = parsed.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(|k| k.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(
            keys,
            vec!["accuracy_mean", "accuracy_std", "dataset", "per_split", "repetitions", "seed"]
        );
    }

    #[test]
    fn kfold_probe_scores_separable_data_perfectly() {
        let (h, labels) = clustered_embeddings(50, 0.2, 17);
        let acc = kfold_probe(&h, &labels, 2, 5, 1e-2, &mut seeded(18)).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn vulnerability_step_zero_is_exact() {
        let g = path_graph(8, 4);
        let gcn = init_gcn(4, 6, 3, &mut seeded(19)).unwrap();
        let curve =
            vulnerability_study(&g, |g| embed(g, &gcn), 0.05, 0, &mut seeded(20)).unwrap();
        assert_eq!(curve.rows.len(), 1);
        assert_eq!(
            curve.rows[0],
            VulnerabilityRow { step: 0, mean: 1.0, std: 0.0, edge_retention: 1.0 }
        );
    }

    #[test]
    fn constant_embedding_keeps_similarity_at_one() {
        let g = path_graph(8, 4);
        let fixed = DenseMatrix::filled(8, 3, 0.7);
        let curve =
            vulnerability_study(&g, |_| Ok(fixed.clone()), 0.1, 5, &mut seeded(21)).unwrap();
        for row in &curve.rows {
            assert_eq!(row.mean, 1.0);
            assert_eq!(row.std, 0.0);
        }
    }

    #[test]
    fn retention_column_is_the_theoretical_decay() {
        let g = path_graph(8, 4);
        let gcn = init_gcn(4, 6, 3, &mut seeded(22)).unwrap();
        let curve =
            vulnerability_study(&g, |g| embed(g, &gcn), 0.03, 60, &mut seeded(23)).unwrap();
        let last = curve.rows.last().unwrap();
        assert_eq!(last.step, 60);
        assert!((last.edge_retention - 0.97f64.powi(60)).abs() < 1e-15);
        assert!((last.edge_retention - 0.1608).abs() < 1e-4);
    }

    #[test]
    fn curve_csv_has_expected_header() {
        let mut curve = VulnerabilityCurve::default();
        curve.rows.push(VulnerabilityRow { step: 0, mean: 1.0, std: 0.0, edge_retention: 1.0 });
        let csv = curve.to_csv();
        assert!(csv.starts_with("step,mean,std,edge_retention\n"));
        assert!(csv.contains("0,1,0,1\n"));
    }

    #[test]
    fn spearman_detects_monotone_sequences() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..10).map(|i| (10 - i) as f64).collect();
        assert!((spearman(&a, &b).unwrap() + 1.0).abs() < 1e-12);
        let c: Vec<f64> = a.iter().map(|v| v.exp()).collect();
        assert!((spearman(&a, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_fit_rejects_bad_labels() {
        let x = DenseMatrix::identity(4);
        assert!(matches!(
            fit_logistic(&x, &[0, 1, 2, 5], 3, 1e-2, 10, 0.5),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn identity_activation_embed_matches_hand_computation() {
        // Linear GCN on a single edge: with identity weights the embedding
        // is just the doubly-applied normalized adjacency times features.
        let g = Graph::new(
            SparseSymmetric::new(2, vec![(0, 1, 1.0)]).unwrap(),
            DenseMatrix::identity(2),
            None,
            None,
        )
        .unwrap();
        let gcn = GcnParams {
            w1: DenseMatrix::identity(2),
            w2: DenseMatrix::identity(2),
            activation: Activation::Identity,
        };
        let h = embed(&g, &gcn).unwrap();
        // Normalized adjacency of a single edge with self-loops is
        // [[.5,.5],[.5,.5]]; squared it is itself, so every entry is 0.5.
        for v in h.values() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }
}
