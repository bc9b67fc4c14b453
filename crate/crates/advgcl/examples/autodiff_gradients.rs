//! Builds a small matrix expression on the reverse-mode tape, runs one
//! backward pass, and checks every gradient against central finite
//! differences.

use advgcl::numkit::{finite_diff_check, DenseMatrix, Tape};
use advgcl::Result;

fn inputs() -> Result<(DenseMatrix, DenseMatrix)> {
    let w = DenseMatrix::from_rows(&[
        vec![0.5, -1.0],
        vec![0.25, 2.0],
        vec![-0.75, 0.1],
    ])?;
    let x = DenseMatrix::from_rows(&[
        vec![1.0, 0.0, 2.0],
        vec![0.0, 1.0, -1.0],
    ])?;
    Ok((w, x))
}

fn main() -> Result<()> {
    let (w0, x0) = inputs()?;

    // loss = sum(relu(X W)^2)
    let mut tape = Tape::new();
    let w = tape.var(w0.clone());
    let x = tape.constant(x0.clone());
    let xw = tape.matmul(x, w)?;
    let a = tape.relu(xw);
    let sq = tape.mul(a, a)?;
    let loss = tape.sum(sq);

    println!("loss = {:.6}", tape.scalar(loss)?);

    let grads = tape.backward(loss)?;
    let gw = grads.expect(w)?;
    println!("dloss/dW =");
    for i in 0..gw.rows() {
        let row: Vec<String> = gw.row(i).iter().map(|v| format!("{v:8.4}")).collect();
        println!("  [{}]", row.join(", "));
    }

    // The checker rebuilds the expression at perturbed points and compares
    // the tape gradient to central differences entry by entry.
    let max_rel = finite_diff_check(
        |t, w| {
            let x = t.constant(x0.clone());
            let xw = t.matmul(x, w)?;
            let a = t.relu(xw);
            let sq = t.mul(a, a)?;
            Ok(t.sum(sq))
        },
        &w0,
        1e-5,
    )?;

    println!("max relative error vs finite differences: {max_rel:.2e}");
    assert!(max_rel < 1e-6, "gradient check failed");
    println!("gradient check passed");
    Ok(())
}
