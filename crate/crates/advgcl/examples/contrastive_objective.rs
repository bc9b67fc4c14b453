//! Assembles the training objective piece by piece on hand-built
//! embeddings: the symmetric InfoNCE term, the adversarial term, and the
//! hinge regularizer that keeps the views close to the original.

use advgcl::contrastive::{
    info_regularization, node_contrastive_loss, node_objective, SimilarityConfig,
};
use advgcl::encoders::ProjectionHead;
use advgcl::numkit::{DenseMatrix, Tape};
use advgcl::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy_copy(base: &DenseMatrix, noise: f64, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let data = base
        .values()
        .iter()
        .map(|v| v + noise * (rng.random::<f64>() - 0.5))
        .collect();
    DenseMatrix::from_vec(base.rows(), base.cols(), data).expect("same shape")
}

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let clean = DenseMatrix::from_vec(
        6,
        4,
        (0..24).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
    )?;
    let view1 = noisy_copy(&clean, 0.2, &mut rng);
    let view2 = noisy_copy(&clean, 0.2, &mut rng);
    let adversarial = noisy_copy(&clean, 1.5, &mut rng);

    let head = ProjectionHead::identity(4);
    let sim = SimilarityConfig::new(0.5)?;

    let mut tape = Tape::new();
    let bhead = head.bind(&mut tape, false);
    let h1 = tape.constant(view1.clone());
    let h2 = tape.constant(view2.clone());
    let h_adv = tape.constant(adversarial.clone());
    let h = tape.constant(clean.clone());

    let con = node_contrastive_loss(&mut tape, h1, h2, &bhead, &sim)?;
    let adv = node_contrastive_loss(&mut tape, h1, h_adv, &bhead, &sim)?;
    let reg = info_regularization(&mut tape, h1, h2, h, &bhead)?;
    println!("contrastive (two close views):   {:.4}", tape.scalar(con)?);
    println!("adversarial (view vs far copy):  {:.4}", tape.scalar(adv)?);
    println!("regularizer (hinge, near zero):  {:.4}", tape.scalar(reg)?);

    // The full objective on one tape, with the same inputs.
    let mut tape = Tape::new();
    let bhead = head.bind(&mut tape, false);
    let h1 = tape.constant(view1);
    let h2 = tape.constant(view2);
    let h_adv = tape.constant(adversarial);
    let h = tape.constant(clean);
    let (_, breakdown) = node_objective(&mut tape, h1, h2, h_adv, h, &bhead, &sim, 1.0, 1.0)?;
    println!(
        "total = {:.4} + {} * {:.4} + {} * {:.4} = {:.4}",
        breakdown.l_con,
        breakdown.eps1,
        breakdown.l_adv,
        breakdown.eps2,
        breakdown.l_ir,
        breakdown.total
    );
    Ok(())
}
