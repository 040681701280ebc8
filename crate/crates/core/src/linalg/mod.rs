//! Linear algebra, randomness, and special functions shared by the rest of the crate.

pub mod bounds;
pub mod dense;
pub mod operator;
pub mod rng;
pub mod special;

pub use bounds::{op_norm_bounds, op_norm_bounds_with, BoundsOptions, SpectrumBounds};
pub use dense::{dense_eigh, dense_eigh_limited, EigenDecomposition, SymmetricMatrix, DEFAULT_DENSE_LIMIT};
pub use operator::SparseSymOperator;
pub use rng::{sample_dirichlet_half, sample_unit_sphere, SeededRng};
pub use special::{digamma, log_sum_exp, softmax};
