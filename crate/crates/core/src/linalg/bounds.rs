//! Extreme-eigenvalue estimates for operators given only through matvecs.

use serde::{Deserialize, Serialize};

use super::operator::SparseSymOperator;
use super::rng::{sample_unit_sphere, SeededRng};
use crate::error::{invalid, Result};
use crate::lanczos::{lanczos_decompose, tridiagonal_eigh, LanczosOptions};

const PILOT_STEPS: usize = 30;
const DEFAULT_FAILURE_PROB: f64 = 1e-3;
const DEFAULT_MAX_ITERATIONS: usize = 1000;

/// Ritz-value estimates of the spectrum ends. Both are inner bounds:
/// `lambda_min >= true min` and `lambda_max <= true max` up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumBounds {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Lanczos steps of the final run.
    pub iterations: usize,
    /// False when the iteration cap stopped short of the step count the
    /// random-start guarantee asks for.
    pub converged: bool,
    /// Relative tolerance the estimates target.
    pub tol: f64,
}

impl SpectrumBounds {
    /// Absolute slack on `lambda_max`: true value lies in `[lambda_max, lambda_max + slack]`.
    pub fn max_slack(&self) -> f64 {
        if self.exact() {
            return 0.0;
        }
        self.tol * self.lambda_max.abs().max(1.0)
    }

    pub fn min_slack(&self) -> f64 {
        if self.exact() {
            return 0.0;
        }
        self.tol * self.lambda_min.abs().max(1.0)
    }

    /// True when Lanczos spanned an invariant subspace; the estimates are then
    /// eigenvalues (extreme ones with probability one over the start vector).
    fn exact(&self) -> bool {
        self.converged && self.tol == 0.0
    }

    pub fn op_norm(&self) -> f64 {
        self.lambda_max.abs().max(self.lambda_min.abs())
    }
}

/// Options for [`op_norm_bounds_with`].
#[derive(Debug, Clone, Copy)]
pub struct BoundsOptions {
    pub tol: f64,
    pub failure_prob: f64,
    pub max_iterations: usize,
}

impl BoundsOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            tol,
            failure_prob: DEFAULT_FAILURE_PROB,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// Estimates `(lambda_min, lambda_max)` of `op` to relative tolerance `tol`
/// (`|err| <= tol * max(1, |lambda|)`) with failure probability at most 1e-3.
pub fn op_norm_bounds(
    op: &SparseSymOperator,
    tol: f64,
    rng: &mut SeededRng,
) -> Result<SpectrumBounds> {
    op_norm_bounds_with(op, BoundsOptions::new(tol), rng)
}

/// Kuczynski-Wozniakowski step count: Lanczos from a random start reaches
/// relative error `eps` on the top eigenvalue of a PSD operator with
/// probability at least `1 - 1.648 sqrt(n) exp(-sqrt(eps) (2k - 1))`.
fn random_start_steps(n: usize, eps: f64, failure_prob: f64) -> usize {
    let log_term = (1.648 * (n as f64).sqrt() / failure_prob).ln().max(0.0);
    ((log_term / eps.sqrt() + 1.0) / 2.0).ceil() as usize
}

pub fn op_norm_bounds_with(
    op: &SparseSymOperator,
    options: BoundsOptions,
    rng: &mut SeededRng,
) -> Result<SpectrumBounds> {
    let BoundsOptions {
        tol,
        failure_prob,
        max_iterations,
    } = options;
    if !(tol > 0.0 && tol < 1.0) {
        return Err(invalid(format!("tolerance must lie in (0, 1), got {tol}")));
    }
    let n = op.dim();
    let start = sample_unit_sphere(n, rng);
    let lanczos = LanczosOptions {
        reorthogonalize: true,
    };

    let pilot_k = PILOT_STEPS.min(n).min(max_iterations.max(1));
    let pilot = lanczos_decompose(op, &start, pilot_k, lanczos)?;
    let (ritz, _) = tridiagonal_eigh(&pilot.alphas, &pilot.betas)?;
    let (mut lo, mut hi) = (*ritz.last().unwrap(), ritz[0]);
    let mut iterations = pilot.steps();
    let pilot_invariant = pilot.steps() < pilot_k || pilot.residual_norm == 0.0;

    if pilot_invariant || pilot.steps() == n {
        return Ok(SpectrumBounds {
            lambda_min: lo,
            lambda_max: hi,
            iterations,
            converged: true,
            tol: 0.0,
        });
    }

    // The guarantee is for PSD operators; apply it to the shifted operator,
    // converting the requested absolute accuracy into a relative one on the
    // spectral spread. 10% inflation covers the pilot underestimating it.
    let spread = (hi - lo).max(f64::MIN_POSITIVE) * 1.1;
    let eps_hi = (tol * hi.abs().max(1.0) / spread).min(1.0);
    let eps_lo = (tol * lo.abs().max(1.0) / spread).min(1.0);
    let needed = random_start_steps(n, eps_hi.min(eps_lo), failure_prob);
    let cap = max_iterations.min(n);
    let k = needed.min(cap);
    let converged = needed <= cap || cap == n;

    if k > iterations {
        let dec = lanczos_decompose(op, &start, k, lanczos)?;
        let (ritz, _) = tridiagonal_eigh(&dec.alphas, &dec.betas)?;
        lo = *ritz.last().unwrap();
        hi = ritz[0];
        iterations = dec.steps();
        if dec.steps() == n || dec.terminated_early {
            return Ok(SpectrumBounds {
                lambda_min: lo,
                lambda_max: hi,
                iterations,
                converged: true,
                tol: 0.0,
            });
        }
    }
    Ok(SpectrumBounds {
        lambda_min: lo,
        lambda_max: hi,
        iterations,
        converged,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense::{dense_eigh, SymmetricMatrix};
    use nalgebra_sparse::{CooMatrix, CsrMatrix};

    #[test]
    fn identity_is_exact() {
        let b = op_norm_bounds(&SparseSymOperator::identity(5), 1e-6, &mut SeededRng::new(1)).unwrap();
        assert!((b.lambda_min - 1.0).abs() <= 1e-15 && (b.lambda_max - 1.0).abs() <= 1e-15);
        assert!(b.converged);
    }

    #[test]
    fn diagonal_spectrum() {
        let op = SparseSymOperator::diagonal(vec![3.0, -2.0, 0.0]);
        let b = op_norm_bounds(&op, 1e-3, &mut SeededRng::new(2)).unwrap();
        assert!((b.lambda_max - 3.0).abs() <= 1e-3 * 3.0);
        assert!((b.lambda_min + 2.0).abs() <= 1e-3 * 2.0);
    }

    #[test]
    fn sparse_100_matches_dense_extremes() {
        let mut rng = SeededRng::new(3);
        let n = 100;
        let mut coo = CooMatrix::new(n, n);
        for i in 0..n {
            for j in i..n {
                if rng.uniform() < 0.05 {
                    let v = rng.standard_normal();
                    coo.push(i, j, v);
                    if i != j {
                        coo.push(j, i, v);
                    }
                }
            }
        }
        let csr = CsrMatrix::from(&coo);
        let dense = SymmetricMatrix::try_from_dense(nalgebra::DMatrix::from(&csr)).unwrap();
        let exact = dense_eigh(&dense).unwrap();
        let op = SparseSymOperator::from_csr(csr).unwrap();
        let tol = 1e-3;
        let b = op_norm_bounds(&op, tol, &mut rng).unwrap();
        let (emin, emax) = (exact.lambda_min(), exact.lambda_max());
        assert!(b.lambda_max <= emax + 1e-10 && b.lambda_max >= emax - tol * emax.abs().max(1.0));
        assert!(b.lambda_min >= emin - 1e-10 && b.lambda_min <= emin + tol * emin.abs().max(1.0));
    }

    #[test]
    fn iteration_cap_flags_non_convergence() {
        let mut rng = SeededRng::new(4);
        let n = 400;
        let diag: Vec<f64> = (0..n).map(|i| (i as f64 / n as f64).powi(3)).collect();
        let opts = BoundsOptions {
            tol: 1e-9,
            failure_prob: 1e-3,
            max_iterations: 40,
        };
        let b = op_norm_bounds_with(&SparseSymOperator::diagonal(diag), opts, &mut rng).unwrap();
        assert!(!b.converged);
        assert_eq!(b.iterations, 40);
        assert!(b.lambda_max <= 1.0);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let op = SparseSymOperator::identity(2);
        assert!(op_norm_bounds(&op, 0.0, &mut SeededRng::new(0)).is_err());
        assert!(op_norm_bounds(&op, 1.5, &mut SeededRng::new(0)).is_err());
    }
}
