//! Krylov approximation of matrix-exponential-vector products.
//!
//! [`lanczos_decompose`] runs the symmetric Lanczos recurrence
//!
//! ```text
//! q_{i+1} = A q_i - beta_i q_{i-1},  alpha_i = q_{i+1}^T q_i,
//! q_{i+1} -= alpha_i q_i,            beta_{i+1} = |q_{i+1}|
//! ```
//!
//! stopping after `k` steps or at an exact breakdown. [`expm_multiply`] then
//! returns `|b| Q V exp(Lambda) V^T e_1` where `T = V Lambda V^T` is the
//! eigendecomposition of the tridiagonal `T`, computed by implicit-shift QL.
//! The exponential is taken after subtracting `max(Lambda)`; the shift is
//! carried separately as a log-scale so large spectra never overflow.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::operator::SparseSymOperator;

/// Default constant in the iteration-count formula of [`required_iterations`].
pub const DEFAULT_K0: f64 = 4.0;

/// `beta` at or below this fraction of the running norm estimate counts as breakdown.
const BREAKDOWN_RTOL: f64 = 1e-13;

const QL_MAX_SWEEPS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanczosOptions {
    /// Full (twice-applied classical Gram-Schmidt) reorthogonalization.
    pub reorthogonalize: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            reorthogonalize: true,
        }
    }
}

/// Output of `j` Lanczos steps: `A Q = Q T + beta_{j+1} q_{j+1} e_j^T`.
#[derive(Debug, Clone)]
pub struct LanczosDecomposition {
    /// `n x j` orthonormal basis of the Krylov space.
    pub basis: DMatrix<f64>,
    /// Diagonal of `T` (length `j`).
    pub alphas: Vec<f64>,
    /// Off-diagonal of `T` (length `j - 1`).
    pub betas: Vec<f64>,
    /// `beta_{j+1}`; zero after a breakdown.
    pub residual_norm: f64,
    /// Normalized `q_{j+1}`, when `residual_norm > 0`.
    pub residual_vector: Option<DVector<f64>>,
    pub input_norm: f64,
    /// True if the recurrence stopped before the requested `k` steps.
    pub terminated_early: bool,
}

impl LanczosDecomposition {
    pub fn steps(&self) -> usize {
        self.alphas.len()
    }

    pub fn tridiagonal(&self) -> DMatrix<f64> {
        let j = self.steps();
        let mut t = DMatrix::zeros(j, j);
        for i in 0..j {
            t[(i, i)] = self.alphas[i];
        }
        for (i, &b) in self.betas.iter().enumerate() {
            t[(i, i + 1)] = b;
            t[(i + 1, i)] = b;
        }
        t
    }

    /// `max |Q^T Q - I|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let j = self.steps();
        let gram = self.basis.transpose() * &self.basis;
        (gram - DMatrix::<f64>::identity(j, j)).amax()
    }

    /// `max |A Q - Q T - beta_{j+1} q_{j+1} e_j^T|`.
    pub fn recurrence_residual(&self, op: &SparseSymOperator) -> f64 {
        let j = self.steps();
        let mut aq = DMatrix::zeros(self.basis.nrows(), j);
        for c in 0..j {
            let col = op.apply(&self.basis.column(c).into_owned());
            aq.set_column(c, &col);
        }
        let mut r = aq - &self.basis * self.tridiagonal();
        if let Some(q) = &self.residual_vector {
            let mut last = r.column_mut(j - 1);
            last.axpy(-self.residual_norm, q, 1.0);
        }
        r.amax()
    }
}

/// Runs up to `k` Lanczos steps on `op` from `b`. Requests with `k > n` are
/// clamped to `n`.
pub fn lanczos_decompose(
    op: &SparseSymOperator,
    b: &DVector<f64>,
    k: usize,
    options: LanczosOptions,
) -> Result<LanczosDecomposition> {
    let n = op.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    if k == 0 {
        return Err(invalid("Lanczos needs at least one iteration"));
    }
    let k = k.min(n);
    let input_norm = b.norm();
    if !input_norm.is_finite() {
        return Err(Error::NonFinite { iteration: 0 });
    }
    if input_norm == 0.0 {
        return Err(Error::ZeroVector);
    }

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut alphas = Vec::with_capacity(k);
    let mut betas: Vec<f64> = Vec::with_capacity(k);
    let mut w = DVector::zeros(n);
    let mut norm_est: f64 = 0.0;
    basis.push(b / input_norm);

    let mut residual_norm = 0.0;
    let mut residual_vector = None;
    let mut terminated_early = false;

    for i in 0..k {
        op.apply_into(&basis[i], &mut w);
        if i > 0 {
            w.axpy(-betas[i - 1], &basis[i - 1], 1.0);
        }
        let alpha = w.dot(&basis[i]);
        w.axpy(-alpha, &basis[i], 1.0);
        if options.reorthogonalize {
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dot(&w);
                    w.axpy(-c, q, 1.0);
                }
            }
        }
        let beta = w.norm();
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::NonFinite { iteration: i + 1 });
        }
        alphas.push(alpha);
        let prev_beta = if i > 0 { betas[i - 1] } else { 0.0 };
        norm_est = norm_est.max(alpha.abs() + prev_beta + beta);

        if beta <= BREAKDOWN_RTOL * norm_est {
            terminated_early = i + 1 < k;
            break;
        }
        let next = &w / beta;
        if i + 1 == k {
            residual_norm = beta;
            residual_vector = Some(next);
            break;
        }
        betas.push(beta);
        basis.push(next);
    }

    let j = alphas.len();
    let basis = DMatrix::from_columns(&basis[..j]);
    Ok(LanczosDecomposition {
        basis,
        alphas,
        betas,
        residual_norm,
        residual_vector,
        input_norm,
        terminated_early,
    })
}

/// Eigendecomposition of the symmetric tridiagonal matrix with diagonal
/// `diag` and off-diagonal `off` (`off.len() + 1 == diag.len()`), by
/// implicit-shift QL. Eigenvalues are returned descending with matching
/// eigenvector columns.
pub fn tridiagonal_eigh(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = diag.len();
    if n == 0 || off.len() + 1 != n {
        return Err(invalid("tridiagonal needs diag.len() == off.len() + 1 >= 1"));
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z = DMatrix::<f64>::identity(n, n);

    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > QL_MAX_SWEEPS {
                return Err(Error::EigenNonConvergence {
                    n,
                    residual: e[l].abs(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in 0..n {
                    let zf = z[(row, i + 1)];
                    let zi = z[(row, i)];
                    z[(row, i + 1)] = s * zi + c * zf;
                    z[(row, i)] = c * zi - s * zf;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| z[(r, order[c])]);
    Ok((values, vectors))
}

/// `exp(A) b` represented as `direction * exp(log_scale)`.
#[derive(Debug, Clone)]
pub struct ExpmAction {
    pub direction: DVector<f64>,
    pub log_scale: f64,
    /// Lanczos steps actually taken (equals the matvecs spent).
    pub steps: usize,
}

impl ExpmAction {
    /// Materializes `direction * exp(log_scale)`, clamping overflow to `+-f64::MAX`.
    pub fn value(&self) -> DVector<f64> {
        let s = self.log_scale;
        if s < 700.0 {
            return &self.direction * s.exp();
        }
        self.direction.map(|x| {
            if x == 0.0 {
                0.0
            } else {
                x.signum() * (x.abs().ln() + s).exp().min(f64::MAX)
            }
        })
    }
}

/// Lanczos approximation of `exp(A) b` in shifted form.
pub fn expm_multiply_scaled(
    op: &SparseSymOperator,
    b: &DVector<f64>,
    k: usize,
    options: LanczosOptions,
) -> Result<ExpmAction> {
    let dec = lanczos_decompose(op, b, k, options)?;
    let (lambda, v) = tridiagonal_eigh(&dec.alphas, &dec.betas)?;
    let shift = lambda[0];
    let j = lambda.len();
    let weights = DVector::from_fn(j, |c, _| (lambda[c] - shift).exp() * v[(0, c)]);
    let small = &v * weights;
    let direction = (&dec.basis * small) * dec.input_norm;
    Ok(ExpmAction {
        direction,
        log_scale: shift,
        steps: j,
    })
}

/// Lanczos approximation of `exp(A) b` with `k` iterations and full reorthogonalization.
pub fn expm_multiply(op: &SparseSymOperator, b: &DVector<f64>, k: usize) -> Result<DVector<f64>> {
    Ok(expm_multiply_scaled(op, b, k, LanczosOptions::default())?.value())
}

/// Lanczos iteration count sufficient for an `epsilon`-accurate randomized
/// projection with probability `1 - delta`:
///
/// `k = ceil(k0 * sqrt(M log(n M / (epsilon delta))))` with
/// `M = max(op_norm_bound, log(n / (epsilon delta)), 1)`.
pub fn required_iterations(
    op_norm_bound: f64,
    epsilon: f64,
    delta: f64,
    n: usize,
    k0: f64,
) -> usize {
    assert!(epsilon > 0.0 && epsilon < 1.0, "epsilon must lie in (0, 1)");
    assert!(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    assert!(op_norm_bound >= 0.0 && k0 > 0.0);
    let n = n.max(1) as f64;
    let m = op_norm_bound
        .max((n / (epsilon * delta)).ln())
        .max(1.0);
    let k = (k0 * (m * (n * m / (epsilon * delta)).ln()).sqrt()).ceil();
    (k as usize).max(1)
}
