//! Dense symmetric matrices and their eigendecompositions.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default largest dimension for which dense `O(n^3)` routines are allowed.
pub const DEFAULT_DENSE_LIMIT: usize = 2048;

const EIGEN_MAX_SWEEPS: usize = 10_000;

/// A dense real symmetric `n x n` matrix.
///
/// Symmetry is exact: every constructor and setter writes both triangles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMatrix {
    data: DMatrix<f64>,
}

impl SymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be positive");
        Self {
            data: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        assert!(n >= 1, "matrix dimension must be positive");
        Self {
            data: DMatrix::identity(n, n),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        assert!(!diag.is_empty(), "matrix dimension must be positive");
        Self {
            data: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        }
    }

    /// Builds a matrix from `f(i, j)` evaluated on the upper triangle `i <= j`.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for j in 0..n {
            for i in 0..=j {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Returns `(a + a^T) / 2`. Fails for non-square input.
    pub fn symmetrize(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(invalid(format!(
                "expected a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.nrows() == 0 {
            return Err(invalid("matrix dimension must be positive"));
        }
        Ok(Self {
            data: (a + a.transpose()) * 0.5,
        })
    }

    /// Wraps `a` if it is exactly symmetric.
    pub fn try_from_dense(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(invalid("expected a non-empty square matrix"));
        }
        let n = a.nrows();
        for j in 0..n {
            for i in 0..j {
                if a[(i, j)] != a[(j, i)] {
                    return Err(invalid(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { data: a })
    }

    /// `outer(x) = x x^T`.
    pub fn outer(x: &DVector<f64>) -> Self {
        Self {
            data: x * x.transpose(),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[(i, j)] = value;
        self.data[(j, i)] = value;
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    /// Frobenius inner product `<self, other> = tr(self other)`.
    pub fn inner(&self, other: &SymmetricMatrix) -> f64 {
        self.data.dot(&other.data)
    }

    /// `x^T self x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.data * x))
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.data * x
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, other: &SymmetricMatrix, c: f64) {
        self.data += &other.data * c;
    }

    /// `self += c * x x^T`.
    pub fn add_outer(&mut self, x: &DVector<f64>, c: f64) {
        self.data.ger(c, x, x, 1.0);
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            data: &self.data * c,
        }
    }

    /// `self + c I`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        for i in 0..out.dim() {
            out.data[(i, i)] += c;
        }
        out
    }

    /// `R self R^T` for a square `R`.
    pub fn congruence(&self, r: &DMatrix<f64>) -> Self {
        let prod = r * &self.data * r.transpose();
        // Re-symmetrize to remove rounding asymmetry.
        Self {
            data: (&prod + prod.transpose()) * 0.5,
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.amax()
    }

    /// Maximum absolute row sum. Upper bound on the operator norm.
    pub fn row_sum_norm(&self) -> f64 {
        self.data
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Spectral (operator) norm via a dense eigendecomposition.
    pub fn op_norm(&self) -> Result<f64> {
        let eig = dense_eigh(self)?;
        Ok(eig.lambda_max().abs().max(eig.lambda_min().abs()))
    }
}

/// Eigendecomposition `A = Q diag(lambda) Q^T` with eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[self.dim() - 1]
    }

    /// `Q f(Lambda) Q^T`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SymmetricMatrix {
        let mut scaled = self.eigenvectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.eigenvalues[j]);
        }
        let prod = scaled * self.eigenvectors.transpose();
        SymmetricMatrix {
            data: (&prod + prod.transpose()) * 0.5,
        }
    }

    /// `Q diag(weights) Q^T` for an explicit weight vector.
    pub fn with_spectrum(&self, weights: &[f64]) -> SymmetricMatrix {
        assert_eq!(weights.len(), self.dim());
        let mut scaled = self.eigenvectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= weights[j];
        }
        let prod = scaled * self.eigenvectors.transpose();
        SymmetricMatrix {
            data: (&prod + prod.transpose()) * 0.5,
        }
    }

    pub fn reconstruct(&self) -> SymmetricMatrix {
        self.map_spectrum(|l| l)
    }

    /// `max |Q^T Q - I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.dim();
        let gram = self.eigenvectors.transpose() * &self.eigenvectors;
        (gram - DMatrix::<f64>::identity(n, n)).amax()
    }
}

/// Dense symmetric eigendecomposition with the default dense limit.
pub fn dense_eigh(a: &SymmetricMatrix) -> Result<EigenDecomposition> {
    dense_eigh_limited(a, DEFAULT_DENSE_LIMIT)
}

/// Dense symmetric eigendecomposition, refusing matrices larger than `limit`.
pub fn dense_eigh_limited(a: &SymmetricMatrix, limit: usize) -> Result<EigenDecomposition> {
    let n = a.dim();
    if n > limit {
        return Err(Error::DenseLimitExceeded { n, limit });
    }
    if !a.is_finite() {
        return Err(Error::EigenNonConvergence {
            n,
            residual: f64::NAN,
        });
    }
    let eig = SymmetricEigen::try_new(a.data.clone(), f64::EPSILON, EIGEN_MAX_SWEEPS).ok_or(
        Error::EigenNonConvergence {
            n,
            residual: a.max_abs(),
        },
    )?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}
