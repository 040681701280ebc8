//! Mirror projections onto the spectrahedron and the simplex.
//!
//! For a symmetric `Y` with eigendecomposition `Q diag(lambda) Q^T`:
//!
//! * matrix multiplicative weights plays `exp(Y) / tr exp(Y)`;
//! * the rank-1 sketch plays `v v^T / v^T v` with `v = exp(Y/2) u` for `u`
//!   uniform on the sphere;
//! * its mean over `u` (the averaged projection) equals
//!   `Q diag(E_w softmax(lambda + log w)) Q^T` with `w ~ Dirichlet(1/2)`, and
//!   the matching potential is `E_w lse(lambda + log w) = E_u log(u^T exp(Y) u)`.
//!
//! Every exponential is evaluated after subtracting the top eigenvalue; all
//! projections here are invariant to that shift.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lanczos::{expm_multiply_scaled, LanczosOptions};
use crate::linalg::{
    dense_eigh, log_sum_exp, sample_dirichlet_half, sample_unit_sphere, softmax,
    EigenDecomposition, SeededRng, SparseSymOperator, SymmetricMatrix,
};

/// A point of the spectrahedron (PSD, unit trace).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpectrahedronAction {
    /// `x x^T` for a unit vector `x` with canonical sign.
    Rank1(DVector<f64>),
    Dense(SymmetricMatrix),
}

impl SpectrahedronAction {
    /// Normalizes `v` and fixes its sign so the first nonzero entry is positive.
    pub fn from_factor(v: DVector<f64>) -> Result<Self> {
        let norm = v.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Underflow(format!("factor norm is {norm}")));
        }
        let mut x = v / norm;
        if let Some(first) = x.iter().find(|c| **c != 0.0) {
            if *first < 0.0 {
                x.neg_mut();
            }
        }
        Ok(Self::Rank1(x))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Rank1(x) => x.len(),
            Self::Dense(m) => m.dim(),
        }
    }

    pub fn factor(&self) -> Option<&DVector<f64>> {
        match self {
            Self::Rank1(x) => Some(x),
            Self::Dense(_) => None,
        }
    }

    pub fn to_dense(&self) -> SymmetricMatrix {
        match self {
            Self::Rank1(x) => SymmetricMatrix::outer(x),
            Self::Dense(m) => m.clone(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            Self::Rank1(x) => x.norm_squared(),
            Self::Dense(m) => m.trace(),
        }
    }

    /// `<G, X>`.
    pub fn inner(&self, g: &SymmetricMatrix) -> f64 {
        match self {
            Self::Rank1(x) => g.quad_form(x),
            Self::Dense(m) => m.inner(g),
        }
    }

    /// `<Op, X>`; dense actions apply the operator column by column.
    pub fn inner_op(&self, op: &SparseSymOperator) -> f64 {
        match self {
            Self::Rank1(x) => x.dot(&op.apply(x)),
            Self::Dense(m) => m.inner(&op.to_dense()),
        }
    }

    /// Checks unit trace and positive semidefiniteness.
    pub fn check_invariants(&self) -> Result<()> {
        match self {
            Self::Rank1(x) => {
                let dev = (x.norm() - 1.0).abs();
                if dev > 1e-12 {
                    return Err(Error::InvalidArgument(format!(
                        "rank-1 factor norm deviates from 1 by {dev:e}"
                    )));
                }
            }
            Self::Dense(m) => {
                let dev = (m.trace() - 1.0).abs();
                if dev > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "trace deviates from 1 by {dev:e}"
                    )));
                }
                let lmin = dense_eigh(m)?.lambda_min();
                if lmin < -1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "action has negative eigenvalue {lmin:e}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Weights on the simplex stored as logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights {
    pub log_weights: Vec<f64>,
}

impl SimplexWeights {
    pub fn uniform(m: usize) -> Self {
        Self {
            log_weights: vec![0.0; m],
        }
    }

    pub fn from_log_weights(log_weights: Vec<f64>) -> Self {
        Self { log_weights }
    }

    /// Weights on an explicit simplex point (zeros become `-inf` logits).
    pub fn from_weights(w: &[f64]) -> Self {
        Self {
            log_weights: w.iter().map(|x| x.ln()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.log_weights)
    }

    /// Multiplicative-weights step: logits `-= eta * costs`.
    pub fn penalize(&mut self, costs: &[f64], eta: f64) {
        assert_eq!(costs.len(), self.len());
        for (l, c) in self.log_weights.iter_mut().zip(costs) {
            *l -= eta * c;
        }
    }
}

/// `grad lse(c) = exp(c) / 1^T exp(c)`, computed with a max shift.
pub fn softmax_grad(c: &[f64]) -> Vec<f64> {
    softmax(c)
}

/// Matrix multiplicative weights: `exp(Y) / tr exp(Y)`.
pub fn mmw_projection(y: &SymmetricMatrix) -> Result<SpectrahedronAction> {
    Ok(mmw_from_eig(&dense_eigh(y)?, 1.0))
}

/// MMW projection of `scale * A` given the eigendecomposition of `A`.
pub fn mmw_from_eig(eig: &EigenDecomposition, scale: f64) -> SpectrahedronAction {
    let logits: Vec<f64> = eig.eigenvalues.iter().map(|l| scale * l).collect();
    SpectrahedronAction::Dense(eig.with_spectrum(&softmax(&logits)))
}

/// Exact rank-1 randomized projection `P_u(Y)`.
pub fn rank1_projection(y: &SymmetricMatrix, u: &DVector<f64>) -> Result<SpectrahedronAction> {
    rank1_from_eig(&dense_eigh(y)?, 1.0, u)
}

/// `P_u(scale * A)` given the eigendecomposition of `A`.
pub fn rank1_from_eig(
    eig: &EigenDecomposition,
    scale: f64,
    u: &DVector<f64>,
) -> Result<SpectrahedronAction> {
    if u.len() != eig.dim() {
        return Err(Error::DimensionMismatch {
            expected: eig.dim(),
            got: u.len(),
        });
    }
    let z = eig.eigenvectors.tr_mul(u);
    let top = (scale * eig.lambda_max()).max(scale * eig.lambda_min());
    let coeff = DVector::from_fn(z.len(), |i, _| {
        (0.5 * (scale * eig.eigenvalues[i] - top)).exp() * z[i]
    });
    let v = &eig.eigenvectors * coeff;
    SpectrahedronAction::from_factor(v)
}

/// Result of a Lanczos-approximate rank-1 projection.
#[derive(Debug, Clone)]
pub struct LanczosPlay {
    pub action: SpectrahedronAction,
    /// Lanczos steps (matvecs with `Y`) actually spent.
    pub steps: usize,
}

/// Approximate projection `v v^T / v^T v` with `v` the `k`-step Lanczos
/// approximation of `exp(Y/2) u`.
pub fn rank1_projection_lanczos(
    y: &SparseSymOperator,
    u: &DVector<f64>,
    k: usize,
) -> Result<SpectrahedronAction> {
    Ok(rank1_projection_lanczos_with(y, u, k, LanczosOptions::default())?.action)
}

pub fn rank1_projection_lanczos_with(
    y: &SparseSymOperator,
    u: &DVector<f64>,
    k: usize,
    options: LanczosOptions,
) -> Result<LanczosPlay> {
    let half = y.scaled(0.5);
    let act = expm_multiply_scaled(&half, u, k, options)?;
    Ok(LanczosPlay {
        action: SpectrahedronAction::from_factor(act.direction)?,
        steps: act.steps,
    })
}

/// Schatten-1 distance. Two rank-1 actions use the closed form `2 sqrt(1 - (x^T y)^2)`.
pub fn trace_norm_distance(a: &SpectrahedronAction, b: &SpectrahedronAction) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if let (SpectrahedronAction::Rank1(x), SpectrahedronAction::Rank1(y)) = (a, b) {
        // 2 sqrt(1 - (x^T y)^2) == |x - y| |x + y| for unit vectors, without
        // the cancellation near x = +-y.
        return Ok((x - y).norm() * (x + y).norm());
    }
    let mut diff = a.to_dense();
    diff.add_scaled(&b.to_dense(), -1.0);
    Ok(dense_eigh(&diff)?.eigenvalues.iter().map(|l| l.abs()).sum())
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

impl ScalarEstimate {
    pub fn from_samples(xs: impl IntoIterator<Item = f64>) -> Self {
        let mut acc = RunningMoments::default();
        for x in xs {
            acc.push(x);
        }
        acc.estimate()
    }
}

/// Welford accumulator for scalar Monte-Carlo samples.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMoments {
    count: usize,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn estimate(&self) -> ScalarEstimate {
        let var = if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        };
        ScalarEstimate {
            mean: self.mean,
            std_err: (var / self.count.max(1) as f64).sqrt(),
            samples: self.count,
        }
    }
}

/// Entrywise Monte-Carlo estimate of a matrix-valued expectation.
#[derive(Debug, Clone)]
pub struct MatrixEstimate {
    pub mean: SymmetricMatrix,
    pub std_err: DMatrix<f64>,
    pub samples: usize,
}

impl MatrixEstimate {
    pub fn action(&self) -> SpectrahedronAction {
        SpectrahedronAction::Dense(self.mean.clone())
    }
}

fn require_samples(samples: usize, min: usize) -> Result<()> {
    if samples < min {
        return Err(Error::InvalidArgument(format!(
            "need at least {min} Monte-Carlo samples, got {samples}"
        )));
    }
    Ok(())
}

/// Estimates the averaged projection `E_u P_u(Y)` by sampling `u` directly.
pub fn estimate_avg_projection_direct(
    y: &SymmetricMatrix,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<MatrixEstimate> {
    require_samples(samples, 1)?;
    let eig = dense_eigh(y)?;
    let n = y.dim();
    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut sum_sq = DMatrix::<f64>::zeros(n, n);
    for _ in 0..samples {
        let u = sample_unit_sphere(n, rng);
        let x = match rank1_from_eig(&eig, 1.0, &u)? {
            SpectrahedronAction::Rank1(x) => x,
            SpectrahedronAction::Dense(_) => unreachable!(),
        };
        for j in 0..n {
            for i in 0..n {
                let v = x[i] * x[j];
                sum[(i, j)] += v;
                sum_sq[(i, j)] += v * v;
            }
        }
    }
    Ok(finish_matrix_estimate(sum, sum_sq, samples))
}

fn finish_matrix_estimate(sum: DMatrix<f64>, sum_sq: DMatrix<f64>, samples: usize) -> MatrixEstimate {
    let s = samples as f64;
    let mean = &sum / s;
    let std_err = DMatrix::from_fn(mean.nrows(), mean.ncols(), |i, j| {
        if samples < 2 {
            return 0.0;
        }
        let var = ((sum_sq[(i, j)] - s * mean[(i, j)].powi(2)) / (s - 1.0)).max(0.0);
        (var / s).sqrt()
    });
    MatrixEstimate {
        mean: SymmetricMatrix::symmetrize(&mean).expect("square"),
        std_err,
        samples,
    }
}

/// Estimates the averaged projection as `Q diag(E_w softmax(lambda + log w)) Q^T`.
///
/// Standard errors propagate the sample covariance of the softmax vector
/// through the eigenbasis rotation.
pub fn estimate_avg_projection_dirichlet(
    y: &SymmetricMatrix,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<MatrixEstimate> {
    require_samples(samples, 1)?;
    avg_projection_from_eig(&dense_eigh(y)?, 1.0, samples, rng)
}

/// [`estimate_avg_projection_dirichlet`] for `scale * Y` given the
/// eigendecomposition of `Y`.
pub fn avg_projection_from_eig(
    eig: &EigenDecomposition,
    scale: f64,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<MatrixEstimate> {
    require_samples(samples, 1)?;
    let n = eig.dim();
    if n == 1 {
        return Ok(MatrixEstimate {
            mean: SymmetricMatrix::identity(1),
            std_err: DMatrix::zeros(1, 1),
            samples,
        });
    }
    let lambda: Vec<f64> = eig.eigenvalues.iter().map(|l| scale * l).collect();
    let mut sum = DVector::<f64>::zeros(n);
    let mut cross = DMatrix::<f64>::zeros(n, n);
    let mut logits = vec![0.0; n];
    for _ in 0..samples {
        let w = sample_dirichlet_half(n, rng);
        for i in 0..n {
            logits[i] = lambda[i] + w[i].ln();
        }
        let g = DVector::from_vec(softmax(&logits));
        sum += &g;
        cross.ger(1.0, &g, &g, 1.0);
    }
    let s = samples as f64;
    let mean_g = &sum / s;
    let mean = eig.with_spectrum(mean_g.as_slice());

    let std_err = if samples < 2 {
        DMatrix::zeros(n, n)
    } else {
        let cov = (cross - &mean_g * mean_g.transpose() * s) / (s - 1.0);
        let q = &eig.eigenvectors;
        DMatrix::from_fn(n, n, |i, j| {
            let r = DVector::from_fn(n, |a, _| q[(i, a)] * q[(j, a)]);
            let var = r.dot(&(&cov * &r)).max(0.0);
            (var / s).sqrt()
        })
    };
    Ok(MatrixEstimate {
        mean,
        std_err,
        samples,
    })
}

/// Estimates the potential `E_w lse(lambda + log w)`.
pub fn estimate_potential(
    y: &SymmetricMatrix,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<ScalarEstimate> {
    require_samples(samples, 2)?;
    let eig = dense_eigh(y)?;
    let n = y.dim();
    if n == 1 {
        return Ok(ScalarEstimate {
            mean: y.get(0, 0),
            std_err: 0.0,
            samples,
        });
    }
    let lambda = eig.eigenvalues.as_slice();
    let mut acc = RunningMoments::default();
    let mut logits = vec![0.0; n];
    for _ in 0..samples {
        let w = sample_dirichlet_half(n, rng);
        for i in 0..n {
            logits[i] = lambda[i] + w[i].ln();
        }
        acc.push(log_sum_exp(&logits));
    }
    Ok(acc.estimate())
}

/// Per-draw quantities shared by the Bregman-divergence estimators.
#[derive(Debug, Clone, Copy)]
pub struct BregmanTerms {
    /// `log(u^T exp(Y) u)`.
    pub log_quad_y: f64,
    /// `log(u^T exp(Y') u)`.
    pub log_quad_yp: f64,
    /// `<Y, P_u(Y)>`.
    pub inner_y: f64,
    /// `<Y', P_u(Y)>`.
    pub inner_yp: f64,
}

impl BregmanTerms {
    /// One-draw estimate of `V(Y, Y')`.
    pub fn divergence(&self) -> f64 {
        self.log_quad_yp - self.log_quad_y - (self.inner_yp - self.inner_y)
    }

    /// One-draw estimate of `<Y' - Y, P(Y)>`.
    pub fn shift_inner(&self) -> f64 {
        self.inner_yp - self.inner_y
    }
}

/// Evaluates [`BregmanTerms`] for a pair `(Y, Y')` on common sphere draws.
#[derive(Debug, Clone)]
pub struct BregmanSampler {
    eig_y: EigenDecomposition,
    eig_yp: EigenDecomposition,
    y: SymmetricMatrix,
    yp: SymmetricMatrix,
}

impl BregmanSampler {
    pub fn new(y: &SymmetricMatrix, yp: &SymmetricMatrix) -> Result<Self> {
        if y.dim() != yp.dim() {
            return Err(Error::DimensionMismatch {
                expected: y.dim(),
                got: yp.dim(),
            });
        }
        let eig_y = dense_eigh(y)?;
        let eig_yp = if y == yp {
            eig_y.clone()
        } else {
            dense_eigh(yp)?
        };
        Ok(Self {
            eig_y,
            eig_yp,
            y: y.clone(),
            yp: yp.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.y.dim()
    }

    pub fn terms(&self, u: &DVector<f64>) -> Result<BregmanTerms> {
        let x = match rank1_from_eig(&self.eig_y, 1.0, u)? {
            SpectrahedronAction::Rank1(x) => x,
            SpectrahedronAction::Dense(_) => unreachable!(),
        };
        Ok(BregmanTerms {
            log_quad_y: log_quad_exp(&self.eig_y, u),
            log_quad_yp: log_quad_exp(&self.eig_yp, u),
            inner_y: self.y.quad_form(&x),
            inner_yp: self.yp.quad_form(&x),
        })
    }

    pub fn draw(&self, rng: &mut SeededRng) -> Result<BregmanTerms> {
        self.terms(&sample_unit_sphere(self.dim(), rng))
    }
}

/// `log(u^T exp(A) u) = lse(lambda + log (Q^T u)^2)`.
fn log_quad_exp(eig: &EigenDecomposition, u: &DVector<f64>) -> f64 {
    let z = eig.eigenvectors.tr_mul(u);
    let logits: Vec<f64> = z
        .iter()
        .zip(eig.eigenvalues.iter())
        .map(|(zi, l)| l + (zi * zi).ln())
        .collect();
    log_sum_exp(&logits)
}

/// Estimates the Bregman divergence `V(Y, Y') = p(Y') - p(Y) - <Y' - Y, P(Y)>`
/// with all three terms evaluated on the same sphere draws.
pub fn estimate_bregman(
    y: &SymmetricMatrix,
    yp: &SymmetricMatrix,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<ScalarEstimate> {
    require_samples(samples, 2)?;
    let sampler = BregmanSampler::new(y, yp)?;
    let mut acc = RunningMoments::default();
    for _ in 0..samples {
        acc.push(sampler.draw(rng)?.divergence());
    }
    Ok(acc.estimate())
}
