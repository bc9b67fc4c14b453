//! Symmetric sparse matrices stored as upper-triangle coordinate lists.

use crate::error::{Error, Result};
use crate::numkit::dense::DenseMatrix;

/// Symmetric n-by-n sparse matrix. Entries hold `(i, j, value)` with
/// `i <= j`; off-diagonal entries implicitly mirror to `(j, i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymmetric {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSymmetric {
    /// Builds from upper-triangle entries, sorting and validating them.
    pub fn new(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, v) in &entries {
            if i > j {
                return Err(Error::Validation(format!(
                    "sparse entry ({i},{j}) below the diagonal"
                )));
            }
            if j >= n {
                return Err(Error::Validation(format!(
                    "sparse entry ({i},{j}) out of range for n = {n}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Numeric(format!("non-finite sparse entry at ({i},{j})")));
            }
        }
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        if entries.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::Validation("duplicate sparse entry".into()));
        }
        Ok(SparseSymmetric { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz_upper(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Weighted degree vector: row sums of the symmetric matrix.
    pub fn degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.n];
        for &(i, j, v) in &self.entries {
            deg[i] += v;
            if i != j {
                deg[j] += v;
            }
        }
        deg
    }

    /// `self * x` for dense `x` of shape n-by-d.
    pub fn spmm(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.rows() != self.n {
            return Err(Error::Dimension(format!(
                "spmm: sparse is {0}x{0}, dense has {1} rows",
                self.n,
                x.rows()
            )));
        }
        let d = x.cols();
        let mut out = DenseMatrix::zeros(self.n, d);
        for &(i, j, v) in &self.entries {
            for k in 0..d {
                let xjk = x.at(j, k);
                out.set(i, k, out.at(i, k) + v * xjk);
            }
            if i != j {
                for k in 0..d {
                    let xik = x.at(i, k);
                    out.set(j, k, out.at(j, k) + v * xik);
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n, self.n);
        for &(i, j, v) in &self.entries {
            out.set(i, j, v);
            out.set(j, i, v);
        }
        out
    }

    /// Rescales every entry to `value[i][j] * s[i] * s[j]`.
    pub fn scale_bilateral(&self, s: &[f64]) -> Result<SparseSymmetric> {
        if s.len() != self.n {
            return Err(Error::Dimension("bilateral scale length mismatch".into()));
        }
        let entries = self
            .entries
            .iter()
            .map(|&(i, j, v)| (i, j, v * s[i] * s[j]))
            .collect();
        SparseSymmetric::new(self.n, entries)
    }

    /// Adds `w` to every diagonal entry (creating missing ones).
    pub fn add_diagonal(&self, w: f64) -> Result<SparseSymmetric> {
        let mut entries = self.entries.clone();
        let mut present = vec![false; self.n];
        for e in entries.iter_mut() {
            if e.0 == e.1 {
                present[e.0] = true;
                e.2 += w;
            }
        }
        for i in 0..self.n {
            if !present[i] {
                entries.push((i, i, w));
            }
        }
        SparseSymmetric::new(self.n, entries)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> SparseSymmetric {
        SparseSymmetric::new(3, vec![(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn spmm_matches_dense() {
        let s = path3();
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let got = s.spmm(&x).unwrap();
        let want = s.to_dense().matmul(&x).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn degrees_count_both_endpoints() {
        assert_eq!(path3().degrees(), vec![1.0, 2.0, 1.0]);
        let with_diag = SparseSymmetric::new(2, vec![(0, 0, 3.0), (0, 1, 1.0)]).unwrap();
        assert_eq!(with_diag.degrees(), vec![4.0, 1.0]);
    }

    #[test]
    fn rejects_lower_triangle_and_duplicates() {
        assert!(SparseSymmetric::new(3, vec![(1, 0, 1.0)]).is_err());
        assert!(SparseSymmetric::new(3, vec![(0, 1, 1.0), (0, 1, 2.0)]).is_err());
        assert!(SparseSymmetric::new(3, vec![(0, 3, 1.0)]).is_err());
    }

    #[test]
    fn add_diagonal_then_degrees() {
        let s = path3().add_diagonal(1.0).unwrap();
        assert_eq!(s.degrees(), vec![2.0, 3.0, 2.0]);
    }
}
