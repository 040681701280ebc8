//! Shared inputs for the criterion benchmarks.

use mmw_sketch::{SeededRng, SparseSymOperator, SymmetricMatrix};

/// Random sparse symmetric matrix with about `per_row` nonzeros per row and
/// operator norm `norm`.
pub fn sparse_symmetric(n: usize, per_row: usize, norm: f64, seed: u64) -> SymmetricMatrix {
    let mut rng = SeededRng::new(seed);
    let density = (per_row as f64 / n as f64).min(1.0);
    let a = SymmetricMatrix::from_upper_fn(n, |i, j| {
        if i == j || rng.uniform() < density {
            rng.standard_normal()
        } else {
            0.0
        }
    });
    a.scaled(norm / a.op_norm().expect("finite matrix"))
}

pub fn sparse_operator(n: usize, per_row: usize, norm: f64, seed: u64) -> SparseSymOperator {
    SparseSymOperator::from_dense(&sparse_symmetric(n, per_row, norm, seed))
}
