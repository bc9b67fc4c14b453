//! Generates a two-block stochastic block model graph, prints its basic
//! statistics, and round-trips it through the text format.

use advgcl::graph::io::{decode_graph, encode_graph};
use advgcl::graph::synthetic::generate_sbm;
use advgcl::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let g = generate_sbm(&[30, 30], 0.2, 0.02, 8, 0.3, &mut rng)?;

    println!("nodes: {}", g.n());
    println!("edges: {}", g.edge_count());
    println!("feature width: {}", g.feature_dim());
    println!("classes: {:?}", g.num_classes());

    let degrees = g.adjacency().degrees();
    let mean_degree = degrees.iter().sum::<f64>() / g.n() as f64;
    println!("mean degree: {mean_degree:.2}");

    let mut within = 0usize;
    let mut across = 0usize;
    let labels = g.node_labels().expect("generator labels blocks");
    for (i, j) in g.edges() {
        if labels[i] == labels[j] {
            within += 1;
        } else {
            across += 1;
        }
    }
    println!("within-block edges: {within}, cross-block edges: {across}");

    let text = encode_graph(&g);
    let back = decode_graph(&text)?;
    assert_eq!(back, g);
    println!("text round-trip: ok ({} bytes)", text.len());
    println!("header line: {}", text.lines().next().unwrap());
    Ok(())
}
