use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::instance::{adjoint_operator, costs, SdpInstance, Triplet};
use crate::error::{invalid, Result};
use crate::lanczos::{required_iterations, LanczosOptions, DEFAULT_K0};
use crate::linalg::{
    dense_eigh, op_norm_bounds, sample_unit_sphere, softmax, SeededRng, SymmetricMatrix,
    DEFAULT_DENSE_LIMIT,
};
use crate::online::streams;
use crate::projections::{rank1_from_eig, rank1_projection_lanczos_with, SimplexWeights, SpectrahedronAction};

/// Step size and horizon for a target duality gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSchedule {
    pub eta: f64,
    pub horizon: usize,
    /// `log(4mn)/(eta T) + 2 eta omega^2` at the chosen `(eta, T)`.
    pub bound: f64,
}

/// Expected-gap bound `log(4mn)/(eta T) + 2 eta omega^2`.
pub fn gap_bound(omega: f64, n: usize, m: usize, eta: f64, horizon: usize) -> f64 {
    (4.0 * m as f64 * n as f64).ln() / (eta * horizon as f64) + 2.0 * eta * omega * omega
}

/// `T = ceil(8 log(4mn) omega^2 / epsilon^2)` and the `eta` that balances the
/// two terms of [`gap_bound`], `eta = sqrt(log(4mn) / (2 omega^2 T))`.
/// A zero width means every gain vanishes; one round suffices.
pub fn gap_schedule(omega: f64, n: usize, m: usize, epsilon: f64) -> Result<GapSchedule> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(invalid(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    if !(omega >= 0.0 && omega.is_finite()) {
        return Err(invalid(format!("width must be finite and nonnegative, got {omega}")));
    }
    if n == 0 || m == 0 {
        return Err(invalid("n and m must be positive"));
    }
    if omega == 0.0 {
        return Ok(GapSchedule {
            eta: 1.0,
            horizon: 1,
            bound: 0.0,
        });
    }
    let log_term = (4.0 * m as f64 * n as f64).ln();
    let horizon = (8.0 * log_term * omega * omega / (epsilon * epsilon)).ceil() as usize;
    let eta = (log_term / (2.0 * omega * omega * horizon as f64)).sqrt();
    Ok(GapSchedule {
        eta,
        horizon,
        bound: gap_bound(omega, n, m, eta, horizon),
    })
}

/// Duality gap `lambda_max(A* y) - min_i <A_i, X>` with an enclosure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub value: f64,
    /// The exact gap lies in this interval.
    pub interval: (f64, f64),
    pub lambda_max: f64,
    /// `lambda_max` is exact when zero, otherwise a Lanczos inner estimate.
    pub lambda_slack: f64,
    pub min_constraint: f64,
}

impl GapReport {
    fn new(lambda_max: f64, lambda_slack: f64, min_constraint: f64) -> Self {
        let value = lambda_max - min_constraint;
        Self {
            value,
            interval: (value, value + lambda_slack),
            lambda_max,
            lambda_slack,
            min_constraint,
        }
    }

    pub fn width(&self) -> f64 {
        self.interval.1 - self.interval.0
    }
}

fn lambda_max_of_adjoint(
    inst: &SdpInstance,
    y: &[f64],
    tol: f64,
    dense_limit: usize,
    rng: &mut SeededRng,
) -> Result<(f64, f64)> {
    if inst.n() <= dense_limit {
        Ok((dense_eigh(&inst.adjoint_dense(y)?)?.lambda_max(), 0.0))
    } else {
        let b = op_norm_bounds(&adjoint_operator(inst, y)?, tol, rng)?;
        Ok((b.lambda_max, b.max_slack()))
    }
}

/// Duality gap of `(X, y)`. `lambda_max` is exact for `n` up to the default
/// dense limit and otherwise estimated to relative tolerance `tol`.
pub fn duality_gap(
    inst: &SdpInstance,
    x: &SpectrahedronAction,
    y: &SimplexWeights,
    tol: f64,
    rng: &mut SeededRng,
) -> Result<GapReport> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(invalid("gap tolerance must be positive"));
    }
    let c = costs(inst, x)?;
    let min_constraint = c.iter().copied().fold(f64::INFINITY, f64::min);
    let (lambda_max, slack) = lambda_max_of_adjoint(inst, &y.weights(), tol, DEFAULT_DENSE_LIMIT, rng)?;
    Ok(GapReport::new(lambda_max, slack, min_constraint))
}

/// Sign decision for `s = min_y max_X <A* y, X>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `s >= 0`: the averaged iterate satisfies `<A_i, X> >= 0` for every `i`.
    Feasible,
    /// `s < 0`: no spectrahedron point satisfies all `<A_i, X> >= 0`; the
    /// averaged weights certify it since `lambda_max(A* y) < 0`.
    Infeasible,
    /// The sign interval straddles zero.
    #[serde(rename = "undetermined-at-ε")]
    Undetermined,
}

impl Verdict {
    pub fn from_interval(s_lower: f64, s_upper: f64) -> Self {
        if s_lower >= 0.0 {
            Verdict::Feasible
        } else if s_upper < 0.0 {
            Verdict::Infeasible
        } else {
            Verdict::Undetermined
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Feasible => "feasible",
            Verdict::Infeasible => "infeasible",
            Verdict::Undetermined => "undetermined-at-ε",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub epsilon: f64,
    /// Failure probability shared across the Lanczos calls of one solve.
    pub delta: f64,
    pub use_lanczos: bool,
    pub k0: f64,
    pub dense_limit: usize,
    /// Relative tolerance for Lanczos estimates of `lambda_max`.
    pub gap_tol: f64,
    /// Stop after this many rounds even if the schedule asks for more.
    pub max_iterations: Option<usize>,
    pub lanczos: LanczosOptions,
}

impl SolverConfig {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            delta: 0.1,
            use_lanczos: false,
            k0: DEFAULT_K0,
            dense_limit: DEFAULT_DENSE_LIMIT,
            gap_tol: 1e-6,
            max_iterations: None,
            lanczos: LanczosOptions::default(),
        }
    }

    /// Per-play accuracy of the Lanczos projection. An error of `e` in trace
    /// norm moves each cost by at most `omega * e`.
    fn lanczos_epsilon(&self, omega: f64) -> f64 {
        (self.epsilon / (4.0 * omega.max(f64::MIN_POSITIVE))).min(0.5)
    }
}

/// Running average of the primal plays.
#[derive(Debug, Clone)]
pub enum PrimalAverage {
    Dense(SpectrahedronAction),
    /// The rank-1 factors of every play, kept when `n` exceeds the dense limit.
    Factors(Vec<DVector<f64>>),
}

impl PrimalAverage {
    pub fn densify(&self) -> SpectrahedronAction {
        match self {
            PrimalAverage::Dense(x) => x.clone(),
            PrimalAverage::Factors(fs) => {
                let n = fs.first().map_or(0, DVector::len);
                let mut sum = SymmetricMatrix::zeros(n);
                for f in fs {
                    sum.add_outer(f, 1.0);
                }
                SpectrahedronAction::Dense(sum.scaled(1.0 / fs.len() as f64))
            }
        }
    }
}

/// State after `t` rounds.
#[derive(Debug, Clone)]
pub struct SaddleIterate {
    pub x_avg: PrimalAverage,
    pub y_avg: SimplexWeights,
    pub t: usize,
    /// `sum_t c_t`.
    pub cost_sums: Vec<f64>,
    /// `eta * sum_t y_t`, so that `Y_{t+1} = sum_i dual_weights[i] A_i`.
    pub dual_weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FeasibilityReport {
    pub iterate: SaddleIterate,
    pub schedule: GapSchedule,
    pub omega: f64,
    pub gap: GapReport,
    /// `min_i <A_i, X_avg> <= s`.
    pub s_lower: f64,
    /// `s <= lambda_max(A* y_avg)`, including estimation slack.
    pub s_upper: f64,
    pub verdict: Verdict,
    pub matvecs: u64,
    /// True when `max_iterations` cut the run short.
    pub partial: bool,
    /// `sum_t c_t^T y_t - min_i sum_t c_t[i]`.
    pub simplex_regret: f64,
    /// `log(m)/eta + (eta/2) sum_t |c_t|_inf^2`.
    pub simplex_regret_bound: f64,
    pub wall_ns: u64,
}

/// Primal-dual feasibility solver: the rank-1 sketch plays `X_t` against
/// multiplicative weights on the constraints.
///
/// The sketch directions come from the [`streams::SKETCH`] sub-stream of `root`.
pub fn solve_feasibility(
    inst: &SdpInstance,
    config: &SolverConfig,
    root: &SeededRng,
) -> Result<FeasibilityReport> {
    let started = Instant::now();
    let (n, m) = (inst.n(), inst.m());
    let mut diag_rng = root.split(streams::DIAGNOSTICS);
    let mut sketch_rng = root.split(streams::SKETCH);
    let width = inst.width(config.dense_limit, &mut diag_rng)?;
    let omega = width.upper();
    let schedule = gap_schedule(omega, n, m, config.epsilon)?;
    if !(config.delta > 0.0 && config.delta < 1.0) {
        return Err(invalid("delta must lie in (0, 1)"));
    }
    let dense = n <= config.dense_limit;
    if !dense && !config.use_lanczos {
        return Err(crate::Error::DenseLimitExceeded {
            n,
            limit: config.dense_limit,
        });
    }
    let horizon = config.max_iterations.map_or(schedule.horizon, |cap| cap.min(schedule.horizon));
    let partial = horizon < schedule.horizon;
    let eta = schedule.eta;
    let eps_l = config.lanczos_epsilon(omega);
    let delta_l = config.delta / schedule.horizon as f64;

    let mut logits = vec![0.0; m];
    let mut dual_weights = vec![0.0; m];
    let mut y_sum = vec![0.0; m];
    let mut cost_sums = vec![0.0; m];
    let mut x_sum = dense.then(|| SymmetricMatrix::zeros(n));
    let mut factors = Vec::new();
    let mut matvecs = 0u64;
    let mut mw_gain = 0.0;
    let mut sq_cost_norms = 0.0;

    for t in 1..=horizon {
        let u = sample_unit_sphere(n, &mut sketch_rng);
        let x = if config.use_lanczos {
            let op = adjoint_operator(inst, &dual_weights)?;
            let y_norm = eta * (t - 1) as f64 * omega;
            let k = required_iterations(y_norm, eps_l, delta_l, n, config.k0).min(n);
            let play = rank1_projection_lanczos_with(&op, &u, k, config.lanczos)?;
            matvecs += play.steps as u64;
            play.action
        } else {
            let y = inst.adjoint_dense(&dual_weights)?;
            rank1_from_eig(&dense_eigh(&y)?, 1.0, &u)?
        };
        let y_t = softmax(&logits);
        let c = costs(inst, &x)?;

        mw_gain += c.iter().zip(&y_t).map(|(a, b)| a * b).sum::<f64>();
        sq_cost_norms += c.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).powi(2);
        for i in 0..m {
            y_sum[i] += y_t[i];
            cost_sums[i] += c[i];
            dual_weights[i] += eta * y_t[i];
            logits[i] -= eta * c[i];
        }
        let f = x.factor().expect("sketch plays are rank one");
        match &mut x_sum {
            Some(s) => s.add_outer(f, 1.0),
            None => factors.push(f.clone()),
        }
    }

    let tf = horizon as f64;
    let y_avg: Vec<f64> = y_sum.iter().map(|v| v / tf).collect();
    let min_constraint = cost_sums.iter().map(|c| c / tf).fold(f64::INFINITY, f64::min);
    let (lambda_max, slack) = lambda_max_of_adjoint(inst, &y_avg, config.gap_tol, config.dense_limit, &mut diag_rng)?;
    let gap = GapReport::new(lambda_max, slack, min_constraint);
    let s_lower = min_constraint;
    let s_upper = lambda_max + slack;
    let simplex_regret = mw_gain - cost_sums.iter().copied().fold(f64::INFINITY, f64::min);
    let simplex_regret_bound = (m as f64).ln() / eta + 0.5 * eta * sq_cost_norms;

    let x_avg = match x_sum {
        Some(s) => PrimalAverage::Dense(SpectrahedronAction::Dense(s.scaled(1.0 / tf))),
        None => PrimalAverage::Factors(factors),
    };
    Ok(FeasibilityReport {
        iterate: SaddleIterate {
            x_avg,
            y_avg: SimplexWeights::from_weights(&y_avg),
            t: horizon,
            cost_sums,
            dual_weights,
        },
        schedule,
        omega,
        gap,
        s_lower,
        s_upper,
        verdict: Verdict::from_interval(s_lower, s_upper),
        matvecs,
        partial,
        simplex_regret,
        simplex_regret_bound,
        wall_ns: started.elapsed().as_nanos() as u64,
    })
}

/// Random sparse instance scaled to unit width. Each upper-triangle entry
/// of each constraint is nonzero with probability `density`.
pub fn random_instance(n: usize, m: usize, density: f64, rng: &mut SeededRng) -> Result<SdpInstance> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(invalid("density must lie in (0, 1]"));
    }
    let mut triplets = Vec::new();
    for constraint in 0..m {
        for col in 0..n {
            for row in 0..=col {
                if rng.uniform() < density {
                    triplets.push(Triplet {
                        constraint,
                        row,
                        col,
                        value: rng.standard_normal(),
                    });
                }
            }
        }
    }
    let raw = SdpInstance::from_triplets(n, m, triplets)?;
    let omega = raw.width(DEFAULT_DENSE_LIMIT, rng)?.upper();
    if omega == 0.0 {
        return Ok(raw);
    }
    let scaled = raw
        .triplets()
        .iter()
        .map(|t| Triplet {
            value: t.value / omega,
            ..*t
        })
        .collect();
    SdpInstance::from_triplets(n, m, scaled)
}
