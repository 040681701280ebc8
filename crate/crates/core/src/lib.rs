//! Rank-1 randomized matrix multiplicative weights.
//!
//! The crate provides the pieces needed to play online learning over the
//! spectrahedron with a rank-1 sketch of matrix multiplicative weights:
//!
//! * [`linalg`]: dense and operator-form symmetric linear algebra, seeded
//!   randomness, and the special functions used by the Monte-Carlo checks.
//! * [`lanczos`]: Krylov approximation of `exp(A) b`.
//! * [`projections`]: exact and randomized mirror projections, plus
//!   Monte-Carlo estimators of the averaged projection and its potential.
//! * [`online`]: the online eigenvector game, adversaries, and regret traces.
//! * [`sdp`]: a primal-dual saddle-point solver for SDP feasibility.

pub mod error;
pub mod lanczos;
pub mod linalg;
pub mod online;
pub mod projections;
pub mod sdp;

pub use error::{Error, Result};
pub use nalgebra;
pub use linalg::{EigenDecomposition, SeededRng, SparseSymOperator, SymmetricMatrix};
pub use projections::{SimplexWeights, SpectrahedronAction};
pub use sdp::SdpInstance;

/// Crate version, embedded in experiment outputs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
