//! Dense and sparse matrices plus a small reverse-mode engine.

pub mod check;
pub mod dense;
pub mod sparse;
pub mod tape;

pub use check::finite_diff_check;
pub use dense::DenseMatrix;
pub use sparse::SparseSymmetric;
pub use tape::{BnState, GradientMap, NodeId, Tape, BN_VAR_FLOOR};
