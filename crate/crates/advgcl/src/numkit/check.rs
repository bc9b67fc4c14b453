//! Gradient verification against central finite differences.

use crate::error::{Error, Result};
use crate::numkit::dense::DenseMatrix;
use crate::numkit::tape::{NodeId, Tape};

/// Compares the tape gradient of a scalar function against central finite
/// differences, entry by entry. `build` receives a fresh tape and the node
/// holding the current input and must return the scalar loss node. Returns
/// the maximum relative error, with the denominator floored at 1e-8.
pub fn finite_diff_check<F>(build: F, x0: &DenseMatrix, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, NodeId) -> Result<NodeId>,
{
    if step <= 0.0 {
        return Err(Error::Validation("finite difference step must be positive".into()));
    }

    let mut tape = Tape::new();
    let x = tape.var(x0.clone());
    let loss = build(&mut tape, x)?;
    let base = tape.scalar(loss)?;
    if !base.is_finite() {
        return Err(Error::Numeric("non-finite loss during gradient check".into()));
    }
    let grads = tape.backward(loss)?;
    let analytic = grads
        .get(x)
        .cloned()
        .unwrap_or_else(|| DenseMatrix::zeros(x0.rows(), x0.cols()));

    let eval = |m: &DenseMatrix| -> Result<f64> {
        let mut t = Tape::new();
        let xn = t.var(m.clone());
        let l = build(&mut t, xn)?;
        let v = t.scalar(l)?;
        if !v.is_finite() {
            return Err(Error::Numeric("non-finite loss during gradient check".into()));
        }
        Ok(v)
    };

    let mut max_rel = 0.0f64;
    for i in 0..x0.rows() {
        for j in 0..x0.cols() {
            let mut plus = x0.clone();
            plus.set(i, j, plus.at(i, j) + step);
            let mut minus = x0.clone();
            minus.set(i, j, minus.at(i, j) - step);
            let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * step);
            let a = analytic.at(i, j);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max((a - numeric).abs() / denom);
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_exact() {
        let x0 = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        let err = finite_diff_check(|t, x| Ok(t.sum(x)), &x0, 1e-5).unwrap();
        assert!(err <= 1e-10, "max rel err {err}");
    }

    #[test]
    fn squared_frobenius_norm_matches() {
        let x0 = DenseMatrix::from_rows(&[
            vec![0.3, -1.2, 0.7],
            vec![2.0, 0.1, -0.4],
            vec![-0.9, 1.5, 0.2],
        ])
        .unwrap();
        let err = finite_diff_check(
            |t, x| {
                let sq = t.mul(x, x)?;
                Ok(t.sum(sq))
            },
            &x0,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-6, "max rel err {err}");
    }

    #[test]
    fn rejects_non_positive_step() {
        let x0 = DenseMatrix::zeros(1, 1);
        assert!(finite_diff_check(|t, x| Ok(t.sum(x)), &x0, 0.0).is_err());
    }
}
