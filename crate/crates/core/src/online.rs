//! The online eigenvector game.
//!
//! At step `t` an [`Adversary`] commits to a symmetric gain `G_t` using only
//! the history of earlier rounds; the player then plays `X_t` in the
//! spectrahedron computed from `Y_t = eta * sum_{i<t} G_i` and collects
//! `<G_t, X_t>`. Regret after `T` rounds is
//! `lambda_max(sum_t G_t) - sum_t <G_t, X_t>`.
//!
//! The engine asks for `G_t` before it draws the sketch direction `u_t`, so a
//! gain can never depend on the action it is scored against.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lanczos::{LanczosOptions, DEFAULT_K0};
use crate::linalg::{
    dense_eigh, dense_eigh_limited, op_norm_bounds, sample_unit_sphere, EigenDecomposition,
    SeededRng, SparseSymOperator, SymmetricMatrix, DEFAULT_DENSE_LIMIT,
};
use crate::projections::{
    mmw_from_eig, rank1_from_eig, rank1_projection_lanczos_with, SpectrahedronAction,
};

/// Sub-stream labels carved out of a run's root seed.
pub mod streams {
    pub const ADVERSARY: u64 = 1;
    pub const SKETCH: u64 = 2;
    pub const MONTE_CARLO: u64 = 3;
    pub const DIAGNOSTICS: u64 = 4;
}

const GAIN_SLACK: f64 = 1e-9;

/// The class of gains an adversary promises to emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainClass {
    /// `|G|_op <= 1`.
    BoundedInfNorm1,
    /// `0 <= G <= I`.
    PsdUnit,
}

/// A symmetric gain matrix.
#[derive(Debug, Clone)]
pub enum Gain {
    Dense(SymmetricMatrix),
    /// `weight * a a^T`.
    Rank1 { weight: f64, vector: DVector<f64> },
}

impl Gain {
    pub fn dim(&self) -> usize {
        match self {
            Gain::Dense(g) => g.dim(),
            Gain::Rank1 { vector, .. } => vector.len(),
        }
    }

    pub fn inner(&self, x: &SpectrahedronAction) -> f64 {
        match (self, x) {
            (Gain::Dense(g), _) => x.inner(g),
            (Gain::Rank1 { weight, vector }, SpectrahedronAction::Rank1(f)) => {
                weight * vector.dot(f).powi(2)
            }
            (Gain::Rank1 { weight, vector }, SpectrahedronAction::Dense(m)) => {
                weight * m.quad_form(vector)
            }
        }
    }

    /// `sum += c * self`.
    pub fn add_to(&self, sum: &mut SymmetricMatrix, c: f64) {
        match self {
            Gain::Dense(g) => sum.add_scaled(g, c),
            Gain::Rank1 { weight, vector } => sum.add_outer(vector, c * weight),
        }
    }

    /// `out += c * self x`.
    pub fn apply_add(&self, x: &DVector<f64>, out: &mut DVector<f64>, c: f64) {
        match self {
            Gain::Dense(g) => out.gemv(c, g.as_matrix(), x, 1.0),
            Gain::Rank1 { weight, vector } => out.axpy(c * weight * vector.dot(x), vector, 1.0),
        }
    }

    pub fn to_dense(&self) -> SymmetricMatrix {
        let mut out = SymmetricMatrix::zeros(self.dim());
        self.add_to(&mut out, 1.0);
        out
    }

    fn is_finite(&self) -> bool {
        match self {
            Gain::Dense(g) => g.is_finite(),
            Gain::Rank1 { weight, vector } => {
                weight.is_finite() && vector.iter().all(|v| v.is_finite())
            }
        }
    }

    /// Extreme eigenvalues `(min, max)`: exact for rank-1 and dense gains up
    /// to `dense_limit`, Lanczos estimates beyond it.
    fn spectrum_ends(&self, dense_limit: usize, rng: &mut SeededRng) -> Result<(f64, f64)> {
        match self {
            Gain::Rank1 { weight, vector } => {
                let top = weight * vector.norm_squared();
                let n = vector.len();
                if n == 1 {
                    Ok((top, top))
                } else {
                    Ok((top.min(0.0), top.max(0.0)))
                }
            }
            Gain::Dense(g) if g.dim() <= dense_limit => {
                let eig = dense_eigh_limited(g, dense_limit)?;
                Ok((eig.lambda_min(), eig.lambda_max()))
            }
            Gain::Dense(g) => {
                let b = op_norm_bounds(&SparseSymOperator::from_dense(g), 1e-9, rng)?;
                Ok((b.lambda_min, b.lambda_max))
            }
        }
    }
}

/// What the adversary may see when choosing `G_t`: everything up to round
/// `t - 1`. The action for round `t` does not exist yet.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    /// The round whose gain is being requested (1-based).
    pub t: usize,
    /// Number of actions already played; always `t - 1`.
    pub actions_played: usize,
    pub previous_gain: Option<&'a Gain>,
    pub previous_action: Option<&'a SpectrahedronAction>,
    /// `sum_{i<t} G_i` when the engine keeps it densely.
    pub cumulative_gain: Option<&'a SymmetricMatrix>,
}

/// A source of gains obeying the oblivious (bandit) assumption.
pub trait Adversary: Send {
    fn dim(&self) -> usize;
    fn gain_class(&self) -> GainClass;
    fn next_gain(&mut self, history: &History<'_>) -> Result<Gain>;
}

/// Kinds of built-in adversaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversaryKind {
    /// A fixed random symmetric matrix with unit operator norm, conjugated by
    /// a fresh Haar-random rotation every round.
    RandomRotation,
    /// One fixed random symmetric matrix with unit operator norm, every round.
    FixedMatrix,
    /// `G = (p p^T + R diag(d) R^T) / 2` with a planted unit `p`, Haar `R`,
    /// and `d` uniform on `[0, 1]`; so `0 <= G <= I`.
    PsdRandom,
    /// `G = a a^T` for unit `a` drawn from a spiked Gaussian.
    StreamingPca,
}

impl AdversaryKind {
    pub const ALL: [AdversaryKind; 4] = [
        AdversaryKind::RandomRotation,
        AdversaryKind::FixedMatrix,
        AdversaryKind::PsdRandom,
        AdversaryKind::StreamingPca,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdversaryKind::RandomRotation => "random_rotation",
            AdversaryKind::FixedMatrix => "fixed_matrix",
            AdversaryKind::PsdRandom => "psd_random",
            AdversaryKind::StreamingPca => "streaming_pca",
        }
    }
}

impl fmt::Display for AdversaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdversaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        AdversaryKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::UnknownAdversary(s.to_string()))
    }
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian, signs fixed by `diag(R)`).
pub fn haar_orthogonal(n: usize, rng: &mut SeededRng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.standard_normal());
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// Random symmetric matrix with unit operator norm.
pub fn random_unit_norm_symmetric(n: usize, rng: &mut SeededRng) -> Result<SymmetricMatrix> {
    let a = SymmetricMatrix::from_upper_fn(n, |_, _| rng.standard_normal());
    let norm = a.op_norm()?;
    Ok(a.scaled(1.0 / norm))
}

struct RandomRotation {
    seed_matrix: SymmetricMatrix,
    rng: SeededRng,
}

impl Adversary for RandomRotation {
    fn dim(&self) -> usize {
        self.seed_matrix.dim()
    }

    fn gain_class(&self) -> GainClass {
        GainClass::BoundedInfNorm1
    }

    fn next_gain(&mut self, history: &History<'_>) -> Result<Gain> {
        debug_assert_eq!(history.actions_played + 1, history.t);
        let r = haar_orthogonal(self.dim(), &mut self.rng);
        Ok(Gain::Dense(self.seed_matrix.congruence(&r)))
    }
}

/// Emits the same gain every round.
#[derive(Debug, Clone)]
pub struct FixedMatrix {
    gain: SymmetricMatrix,
    class: GainClass,
}

impl FixedMatrix {
    pub fn new(gain: SymmetricMatrix, class: GainClass) -> Self {
        Self { gain, class }
    }
}

impl Adversary for FixedMatrix {
    fn dim(&self) -> usize {
        self.gain.dim()
    }

    fn gain_class(&self) -> GainClass {
        self.class
    }

    fn next_gain(&mut self, history: &History<'_>) -> Result<Gain> {
        debug_assert_eq!(history.actions_played + 1, history.t);
        Ok(Gain::Dense(self.gain.clone()))
    }
}

struct PsdRandom {
    planted: DVector<f64>,
    rng: SeededRng,
}

impl Adversary for PsdRandom {
    fn dim(&self) -> usize {
        self.planted.len()
    }

    fn gain_class(&self) -> GainClass {
        GainClass::PsdUnit
    }

    fn next_gain(&mut self, history: &History<'_>) -> Result<Gain> {
        debug_assert_eq!(history.actions_played + 1, history.t);
        let n = self.dim();
        let r = haar_orthogonal(n, &mut self.rng);
        let d: Vec<f64> = (0..n).map(|_| self.rng.uniform()).collect();
        let mut g = SymmetricMatrix::from_diagonal(&d).congruence(&r);
        g.add_outer(&self.planted, 1.0);
        Ok(Gain::Dense(g.scaled(0.5)))
    }
}

struct StreamingPca {
    spike: DVector<f64>,
    strength: f64,
    rng: SeededRng,
}

impl Adversary for StreamingPca {
    fn dim(&self) -> usize {
        self.spike.len()
    }

    fn gain_class(&self) -> GainClass {
        GainClass::PsdUnit
    }

    fn next_gain(&mut self, history: &History<'_>) -> Result<Gain> {
        debug_assert_eq!(history.actions_played + 1, history.t);
        let n = self.dim();
        let scale = 1.0 / (n as f64).sqrt();
        loop {
            let xi = self.rng.standard_normal();
            let mut a = self.rng.normal_vector(n) * scale;
            a.axpy(self.strength * xi, &self.spike, 1.0);
            let norm = a.norm();
            if norm > 0.0 {
                return Ok(Gain::Rank1 {
                    weight: 1.0,
                    vector: a / norm,
                });
            }
        }
    }
}

/// Builds a built-in adversary whose randomness is the
/// [`streams::ADVERSARY`] sub-stream of `root`.
pub fn builtin_adversary(
    kind: AdversaryKind,
    n: usize,
    root: &SeededRng,
) -> Result<Box<dyn Adversary>> {
    if n == 0 {
        return Err(invalid("adversary dimension must be positive"));
    }
    let mut rng = root.split(streams::ADVERSARY);
    Ok(match kind {
        AdversaryKind::RandomRotation => Box::new(RandomRotation {
            seed_matrix: random_unit_norm_symmetric(n, &mut rng)?,
            rng,
        }),
        AdversaryKind::FixedMatrix => Box::new(FixedMatrix::new(
            random_unit_norm_symmetric(n, &mut rng)?,
            GainClass::BoundedInfNorm1,
        )),
        AdversaryKind::PsdRandom => Box::new(PsdRandom {
            planted: sample_unit_sphere(n, &mut rng),
            rng,
        }),
        AdversaryKind::StreamingPca => Box::new(StreamingPca {
            spike: sample_unit_sphere(n, &mut rng),
            strength: 1.0,
            rng,
        }),
    })
}

/// `eta = sqrt(2 log(4n) / (3T))`, the step size balancing the expected-regret bound.
pub fn default_eta(n: usize, horizon: usize) -> f64 {
    assert!(horizon >= 1, "horizon must be positive");
    (2.0 * (4.0 * n as f64).ln() / (3.0 * horizon as f64)).sqrt()
}

/// Clamps `eta` to the `eta <= 1/6` range required by the refined PSD bound.
/// Returns the clamped value and whether clamping happened.
pub fn clamp_refined_eta(eta: f64) -> (f64, bool) {
    if eta > 1.0 / 6.0 {
        (1.0 / 6.0, true)
    } else {
        (eta, false)
    }
}

/// Lanczos iteration schedule `k_t = ceil(k0 sqrt(1 + eta t) log(n T / delta))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KtSchedule {
    pub n: usize,
    pub horizon: usize,
    pub eta: f64,
    pub delta: f64,
    pub k0: f64,
}

impl KtSchedule {
    /// Iterations for round `t` (1-based; `t = 0` is treated as 1).
    pub fn k(&self, t: usize) -> usize {
        let t = t.max(1) as f64;
        let log_term = (self.n as f64 * self.horizon as f64 / self.delta).ln();
        let k = (self.k0 * (1.0 + self.eta * t).sqrt() * log_term).ceil();
        (k as usize).max(1)
    }
}

pub fn kt_schedule(n: usize, horizon: usize, eta: f64, delta: f64, k0: f64) -> Result<KtSchedule> {
    if n == 0 || horizon == 0 {
        return Err(invalid("n and T must be positive"));
    }
    if !(eta >= 0.0 && eta.is_finite()) || k0.is_nan() || k0 <= 0.0 {
        return Err(invalid("eta must be nonnegative and k0 positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta must lie in (0, 1)"));
    }
    Ok(KtSchedule {
        n,
        horizon,
        eta,
        delta,
        k0,
    })
}

/// Step size, horizon, and Lanczos iteration rule for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eta: f64,
    pub horizon: usize,
    pub delta: f64,
    pub kt: KtSchedule,
}

impl Schedule {
    /// Default step size and the default `k_t` rule with `k0 = 4`.
    pub fn standard(n: usize, horizon: usize, delta: f64) -> Result<Self> {
        Self::new(n, horizon, default_eta(n, horizon), delta, DEFAULT_K0)
    }

    pub fn new(n: usize, horizon: usize, eta: f64, delta: f64, k0: f64) -> Result<Self> {
        if eta.is_nan() || eta <= 0.0 {
            return Err(invalid("eta must be positive"));
        }
        Ok(Self {
            eta,
            horizon,
            delta,
            kt: kt_schedule(n, horizon, eta, delta, k0)?,
        })
    }
}

/// How the player picks `X_t` from `Y_t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// `exp(Y) / tr exp(Y)`.
    ExactMmw,
    /// Rank-1 sketch with an exact dense matrix exponential.
    Rank1Exact,
    /// Rank-1 sketch with `k_t` Lanczos iterations.
    Rank1Lanczos,
    /// Monte-Carlo estimate of the averaged projection (a test-only reference).
    AveragedMc { samples: usize },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::ExactMmw => "exact_mmw",
            Strategy::Rank1Exact => "rank1_exact",
            Strategy::Rank1Lanczos => "rank1_lanczos",
            Strategy::AveragedMc { .. } => "averaged_mc",
        }
    }

    fn needs_dense(&self) -> bool {
        !matches!(self, Strategy::Rank1Lanczos)
    }

    fn draws_sketch(&self) -> bool {
        matches!(self, Strategy::Rank1Exact | Strategy::Rank1Lanczos)
    }
}

/// Engine knobs that are not part of the game itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub dense_limit: usize,
    pub lanczos: LanczosOptions,
    /// Relative tolerance for `lambda_max` when it must be estimated by Lanczos.
    pub lambda_tol: f64,
    /// Check every gain against its declared class.
    pub validate_gains: bool,
    /// Record `lambda_max(sum_{i<=t} G_i)` each round (dense only).
    pub record_running_lambda: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            dense_limit: DEFAULT_DENSE_LIMIT,
            lanczos: LanczosOptions::default(),
            lambda_tol: 1e-6,
            validate_gains: true,
            record_running_lambda: true,
        }
    }
}

/// One round of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// `<G_t, X_t>`.
    pub gain: f64,
    pub cumulative_gain: f64,
    /// `lambda_max(sum_{i<=t} G_i)`, when recorded.
    pub lambda_max: Option<f64>,
    /// Lanczos iterations used (after clamping to `n`), for the Lanczos strategy.
    pub k_t: Option<usize>,
    pub matvecs: u64,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub n: usize,
    pub horizon: usize,
    pub strategy: String,
    pub eta: f64,
    pub total_gain: f64,
    /// `lambda_max(sum_t G_t)` (a lower estimate when `lambda_max_slack > 0`).
    pub lambda_max: f64,
    /// The true `lambda_max` lies in `[lambda_max, lambda_max + slack]`.
    pub lambda_max_slack: f64,
    pub regret: f64,
    pub average_regret: f64,
    pub total_matvecs: u64,
    pub total_k: u64,
}

impl RegretSummary {
    /// Certified interval for the regret.
    pub fn regret_interval(&self) -> (f64, f64) {
        (self.regret, self.regret + self.lambda_max_slack)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub records: Vec<StepRecord>,
    pub summary: RegretSummary,
}

impl RegretTrace {
    /// True when every cumulative field is exactly the prefix sum of the
    /// per-round field.
    pub fn prefix_sums_consistent(&self) -> bool {
        let mut acc = 0.0;
        for r in &self.records {
            acc += r.gain;
            if acc != r.cumulative_gain {
                return false;
            }
        }
        acc == self.summary.total_gain
    }

    /// Regret recomputed from the stored per-round values.
    pub fn recomputed_regret(&self) -> f64 {
        let total: f64 = self.records.iter().map(|r| r.gain).sum();
        self.summary.lambda_max - total
    }
}

/// `log(4n)/eta + (3 eta / 2) sum_t |G_t|^2`, with `|G_t| <= 1` giving `sum = T`.
pub fn expected_regret_bound(n: usize, eta: f64, sum_sq_norms: f64) -> f64 {
    (4.0 * n as f64).ln() / eta + 1.5 * eta * sum_sq_norms
}

/// Expected bound plus the `sqrt(2 T log(1/delta))` martingale term.
pub fn high_probability_regret_bound(n: usize, eta: f64, horizon: usize, delta: f64) -> f64 {
    let t = horizon as f64;
    expected_regret_bound(n, eta, t) + (2.0 * t * (1.0 / delta).ln()).sqrt()
}

/// `log(4n)/eta + 3 eta lambda_max(sum G)` for PSD gains below the identity.
pub fn refined_regret_bound(n: usize, eta: f64, lambda_max: f64) -> f64 {
    (4.0 * n as f64).ln() / eta + 3.0 * eta * lambda_max
}

enum GainStore {
    Dense(SymmetricMatrix),
    Lazy(Vec<Arc<Gain>>),
}

fn lazy_operator(n: usize, gains: &[Arc<Gain>], scale: f64) -> SparseSymOperator {
    let gains: Vec<Arc<Gain>> = gains.to_vec();
    let nnz = gains.len() * n;
    SparseSymOperator::from_fn(n, nnz, move |x, out| {
        out.fill(0.0);
        for g in &gains {
            g.apply_add(x, out, scale);
        }
    })
}

fn validate_gain(
    gain: &Gain,
    class: GainClass,
    n: usize,
    t: usize,
    options: &RunOptions,
    rng: &mut SeededRng,
) -> Result<()> {
    let bad = |reason: String| Error::InvalidGain { t, reason };
    if gain.dim() != n {
        return Err(bad(format!("dimension {} != {n}", gain.dim())));
    }
    if !gain.is_finite() {
        return Err(bad("non-finite entries".into()));
    }
    if !options.validate_gains {
        return Ok(());
    }
    if let (Gain::Dense(g), GainClass::BoundedInfNorm1) = (gain, class) {
        // Row-sum norm bounds the operator norm; skip the eigensolver when it suffices.
        if g.row_sum_norm() <= 1.0 + GAIN_SLACK {
            return Ok(());
        }
    }
    let (lo, hi) = gain.spectrum_ends(options.dense_limit, rng)?;
    match class {
        GainClass::BoundedInfNorm1 => {
            if hi > 1.0 + GAIN_SLACK || lo < -1.0 - GAIN_SLACK {
                return Err(bad(format!("spectrum [{lo}, {hi}] exceeds [-1, 1]")));
            }
        }
        GainClass::PsdUnit => {
            if hi > 1.0 + GAIN_SLACK || lo < -GAIN_SLACK {
                return Err(bad(format!("spectrum [{lo}, {hi}] exceeds [0, 1]")));
            }
        }
    }
    Ok(())
}

/// Plays `schedule.horizon` rounds of the online eigenvector game.
///
/// Randomness comes from sub-streams of `root`: [`streams::SKETCH`] for the
/// directions `u_t` and [`streams::MONTE_CARLO`] for averaged-projection
/// samples. Two strategies run from the same `root` see the same `u_t`.
pub fn run_online(
    adversary: &mut dyn Adversary,
    strategy: Strategy,
    schedule: &Schedule,
    root: &SeededRng,
    options: &RunOptions,
) -> Result<RegretTrace> {
    let n = adversary.dim();
    let horizon = schedule.horizon;
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    let dense = n <= options.dense_limit;
    if strategy.needs_dense() && !dense {
        return Err(Error::DenseLimitExceeded {
            n,
            limit: options.dense_limit,
        });
    }
    if let Strategy::AveragedMc { samples } = strategy {
        if samples == 0 {
            return Err(invalid("averaged strategy needs at least one sample"));
        }
    }
    let class = adversary.gain_class();
    let eta = schedule.eta;
    let mut sketch_rng = root.split(streams::SKETCH);
    let mut mc_rng = root.split(streams::MONTE_CARLO);
    let mut diag_rng = root.split(streams::DIAGNOSTICS);

    let mut store = if dense {
        GainStore::Dense(SymmetricMatrix::zeros(n))
    } else {
        GainStore::Lazy(Vec::with_capacity(horizon))
    };
    // Eigendecomposition of the current gain sum (none at t = 1: the sum is 0).
    let mut eig: Option<EigenDecomposition> = None;
    let track_eig = dense && (strategy.needs_dense() || options.record_running_lambda);
    let mut records = Vec::with_capacity(horizon);
    let mut previous: Option<(Gain, SpectrahedronAction)> = None;
    let mut cumulative = 0.0;
    let mut total_matvecs = 0u64;
    let mut total_k = 0u64;

    for t in 1..=horizon {
        let gain = {
            let history = History {
                t,
                actions_played: t - 1,
                previous_gain: previous.as_ref().map(|p| &p.0),
                previous_action: previous.as_ref().map(|p| &p.1),
                cumulative_gain: match &store {
                    GainStore::Dense(s) => Some(s),
                    GainStore::Lazy(_) => None,
                },
            };
            adversary.next_gain(&history)?
        };
        validate_gain(&gain, class, n, t, options, &mut diag_rng)?;

        let started = Instant::now();
        let u = if strategy.draws_sketch() {
            Some(sample_unit_sphere(n, &mut sketch_rng))
        } else {
            None
        };
        let zero_eig = || dense_eigh_limited(&SymmetricMatrix::zeros(n), options.dense_limit);
        let mut matvecs = 0;
        let mut k_used = None;
        let action = match strategy {
            Strategy::ExactMmw => {
                let e = match &eig {
                    Some(e) => e.clone(),
                    None => zero_eig()?,
                };
                mmw_from_eig(&e, eta)
            }
            Strategy::Rank1Exact => {
                let e = match &eig {
                    Some(e) => e.clone(),
                    None => zero_eig()?,
                };
                rank1_from_eig(&e, eta, u.as_ref().unwrap())?
            }
            Strategy::AveragedMc { samples } => {
                let e = match &eig {
                    Some(e) => e.clone(),
                    None => zero_eig()?,
                };
                crate::projections::avg_projection_from_eig(&e, eta, samples, &mut mc_rng)?
                    .action()
            }
            Strategy::Rank1Lanczos => {
                let op = match &store {
                    GainStore::Dense(s) => SparseSymOperator::from_dense(s).scaled(eta),
                    GainStore::Lazy(gs) => lazy_operator(n, gs, eta),
                };
                let k = schedule.kt.k(t).min(n);
                let play = rank1_projection_lanczos_with(&op, u.as_ref().unwrap(), k, options.lanczos)?;
                matvecs = play.steps as u64;
                k_used = Some(k);
                total_k += k as u64;
                play.action
            }
        };
        let value = gain.inner(&action);

        let mut lambda_running = None;
        match &mut store {
            GainStore::Dense(s) => {
                gain.add_to(s, 1.0);
                if track_eig {
                    let e = dense_eigh_limited(s, options.dense_limit)?;
                    if options.record_running_lambda {
                        lambda_running = Some(e.lambda_max());
                    }
                    eig = Some(e);
                }
            }
            GainStore::Lazy(gs) => gs.push(Arc::new(gain.clone())),
        }
        let wall_ns = started.elapsed().as_nanos() as u64;

        cumulative += value;
        total_matvecs += matvecs;
        records.push(StepRecord {
            t,
            gain: value,
            cumulative_gain: cumulative,
            lambda_max: lambda_running,
            k_t: k_used,
            matvecs,
            wall_ns,
        });
        previous = Some((gain, action));
    }

    let (lambda_max, slack) = match &store {
        GainStore::Dense(s) => {
            let e = match eig {
                Some(e) => e,
                None => dense_eigh(s)?,
            };
            (e.lambda_max(), 0.0)
        }
        GainStore::Lazy(gs) => {
            let b = op_norm_bounds(&lazy_operator(n, gs, 1.0), options.lambda_tol, &mut diag_rng)?;
            (b.lambda_max, b.max_slack())
        }
    };
    let regret = lambda_max - cumulative;
    Ok(RegretTrace {
        records,
        summary: RegretSummary {
            n,
            horizon,
            strategy: strategy.name().to_string(),
            eta,
            total_gain: cumulative,
            lambda_max,
            lambda_max_slack: slack,
            regret,
            average_regret: regret / horizon as f64,
            total_matvecs,
            total_k,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_eta_examples() {
        assert!((default_eta(1, 1) - (2.0 * 4f64.ln() / 3.0).sqrt()).abs() < 1e-15);
        assert!((default_eta(1, 1) - 0.9614).abs() < 1e-4);
        assert!((default_eta(32, 4000) / default_eta(32, 1000) - 0.5).abs() < 1e-15);
        // sqrt(2 ln 128 / 15000), evaluated independently: 0.025443...
        assert!((default_eta(32, 5000) - 0.025_443).abs() < 1e-5);
    }

    #[test]
    fn kt_schedule_formula() {
        let s = kt_schedule(10, 100, 0.2, 0.1, 4.0).unwrap();
        let log_term = (10.0f64 * 100.0 / 0.1).ln();
        assert_eq!(s.k(1), (4.0 * 1.2f64.sqrt() * log_term).ceil() as usize);
        assert_eq!(s.k(0), s.k(1));
        let flat = kt_schedule(10, 100, 0.0, 0.1, 4.0).unwrap();
        assert_eq!(flat.k(1), flat.k(100));
        assert_eq!(flat.k(1), (4.0 * log_term).ceil() as usize);
        let ks: Vec<usize> = (1..=100).map(|t| s.k(t)).collect();
        assert!(ks.windows(2).all(|w| w[0] <= w[1]));
        let ratio = s.k(100) as f64 / s.k(1) as f64;
        assert!((ratio - (21.0f64 / 1.2).sqrt()).abs() < 0.1);
        assert!(kt_schedule(10, 100, 0.2, 1.5, 4.0).is_err());
    }

    #[test]
    fn parses_adversary_kinds() {
        assert_eq!("psd-random".parse::<AdversaryKind>().unwrap(), AdversaryKind::PsdRandom);
        assert_eq!(
            "random_rotation".parse::<AdversaryKind>().unwrap(),
            AdversaryKind::RandomRotation
        );
        assert!(matches!(
            "bogus".parse::<AdversaryKind>(),
            Err(Error::UnknownAdversary(_))
        ));
    }

    #[test]
    fn builtin_adversaries_respect_their_class() {
        let root = SeededRng::new(3);
        let mut rng = SeededRng::new(4);
        for kind in AdversaryKind::ALL {
            let mut adv = builtin_adversary(kind, 6, &root).unwrap();
            for t in 1..=10 {
                let h = History {
                    t,
                    actions_played: t - 1,
                    previous_gain: None,
                    previous_action: None,
                    cumulative_gain: None,
                };
                let g = adv.next_gain(&h).unwrap();
                validate_gain(&g, adv.gain_class(), 6, t, &RunOptions::default(), &mut rng).unwrap();
                if kind == AdversaryKind::StreamingPca {
                    let d = g.to_dense();
                    assert!((d.trace() - 1.0).abs() < 1e-12);
                    let eig = dense_eigh(&d).unwrap();
                    assert!(eig.eigenvalues.iter().skip(1).all(|l| l.abs() < 1e-12));
                }
                if kind == AdversaryKind::PsdRandom {
                    let eig = dense_eigh(&g.to_dense()).unwrap();
                    assert!(eig.lambda_min() >= -1e-9 && eig.lambda_max() <= 1.0 + 1e-9);
                }
            }
        }
    }

    #[test]
    fn fixed_matrix_repeats() {
        let g = SymmetricMatrix::from_diagonal(&[0.5, -0.25]);
        let mut adv = FixedMatrix::new(g.clone(), GainClass::BoundedInfNorm1);
        let h = History {
            t: 1,
            actions_played: 0,
            previous_gain: None,
            previous_action: None,
            cumulative_gain: None,
        };
        for _ in 0..3 {
            match adv.next_gain(&h).unwrap() {
                Gain::Dense(x) => assert_eq!(x, g),
                Gain::Rank1 { .. } => panic!("expected dense"),
            }
        }
    }

    #[test]
    fn out_of_class_gain_is_a_hard_error() {
        let g = SymmetricMatrix::from_diagonal(&[2.0, 0.0]);
        let mut adv = FixedMatrix::new(g, GainClass::BoundedInfNorm1);
        let schedule = Schedule::standard(2, 5, 0.1).unwrap();
        let err = run_online(
            &mut adv,
            Strategy::ExactMmw,
            &schedule,
            &SeededRng::new(0),
            &RunOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidGain { t: 1, .. }));

        let neg = SymmetricMatrix::from_diagonal(&[0.5, -0.1]);
        let mut adv = FixedMatrix::new(neg, GainClass::PsdUnit);
        assert!(matches!(
            run_online(&mut adv, Strategy::Rank1Exact, &schedule, &SeededRng::new(0), &RunOptions::default()),
            Err(Error::InvalidGain { t: 1, .. })
        ));
    }

    /// Checks the call-order contract from the adversary side.
    struct Watcher {
        n: usize,
        seen: usize,
    }

    impl Adversary for Watcher {
        fn dim(&self) -> usize {
            self.n
        }
        fn gain_class(&self) -> GainClass {
            GainClass::BoundedInfNorm1
        }
        fn next_gain(&mut self, history: &History<'_>) -> Result<Gain> {
            assert_eq!(history.t, self.seen + 1);
            assert_eq!(history.actions_played, history.t - 1);
            assert_eq!(history.previous_action.is_some(), history.t > 1);
            self.seen += 1;
            Ok(Gain::Dense(SymmetricMatrix::from_diagonal(
                &(0..self.n).map(|i| if i == 0 { 0.5 } else { -0.5 }).collect::<Vec<_>>(),
            )))
        }
    }

    #[test]
    fn gains_are_requested_before_actions_exist() {
        for strategy in [Strategy::ExactMmw, Strategy::Rank1Exact, Strategy::Rank1Lanczos] {
            let mut w = Watcher { n: 4, seen: 0 };
            let schedule = Schedule::standard(4, 20, 0.1).unwrap();
            run_online(&mut w, strategy, &schedule, &SeededRng::new(1), &RunOptions::default()).unwrap();
            assert_eq!(w.seen, 20);
        }
    }

    #[test]
    fn single_round_mmw_regret() {
        let g = SymmetricMatrix::from_diagonal(&[0.9, 0.1, -0.4]);
        let mut adv = FixedMatrix::new(g.clone(), GainClass::BoundedInfNorm1);
        let schedule = Schedule::standard(3, 1, 0.1).unwrap();
        let trace = run_online(&mut adv, Strategy::ExactMmw, &schedule, &SeededRng::new(0), &RunOptions::default())
            .unwrap();
        let want = 0.9 - g.trace() / 3.0;
        assert!((trace.summary.regret - want).abs() < 1e-14);
    }

    #[test]
    fn traces_are_deterministic_and_consistent() {
        let run = |seed| {
            let root = SeededRng::new(seed);
            let mut adv = builtin_adversary(AdversaryKind::RandomRotation, 5, &root).unwrap();
            let schedule = Schedule::standard(5, 50, 0.1).unwrap();
            run_online(adv.as_mut(), Strategy::Rank1Exact, &schedule, &root, &RunOptions::default()).unwrap()
        };
        let a = run(9);
        let b = run(9);
        let strip = |t: &RegretTrace| {
            t.records
                .iter()
                .map(|r| (r.gain.to_bits(), r.cumulative_gain.to_bits(), r.lambda_max.map(f64::to_bits)))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(a.summary, b.summary);
        assert!(a.prefix_sums_consistent());
        assert!((a.recomputed_regret() - a.summary.regret).abs() <= 1e-9);
        assert_ne!(strip(&a), strip(&run(10)));
    }

    #[test]
    fn lanczos_records_iterations_and_matvecs() {
        let root = SeededRng::new(2);
        let mut adv = builtin_adversary(AdversaryKind::RandomRotation, 12, &root).unwrap();
        let schedule = Schedule::new(12, 30, 0.05, 0.1, 0.2).unwrap();
        let trace =
            run_online(adv.as_mut(), Strategy::Rank1Lanczos, &schedule, &root, &RunOptions::default()).unwrap();
        for r in &trace.records {
            let k = r.k_t.unwrap();
            assert!(k <= 12);
            assert!(r.matvecs <= k as u64 && r.matvecs >= 1);
        }
        assert_eq!(trace.summary.total_matvecs, trace.records.iter().map(|r| r.matvecs).sum::<u64>());
    }

    #[test]
    fn lazy_store_above_dense_limit() {
        let root = SeededRng::new(4);
        let n = 40;
        let mut adv = builtin_adversary(AdversaryKind::StreamingPca, n, &root).unwrap();
        let schedule = Schedule::standard(n, 25, 0.1).unwrap();
        let options = RunOptions {
            dense_limit: 16,
            ..RunOptions::default()
        };
        let lazy = run_online(adv.as_mut(), Strategy::Rank1Lanczos, &schedule, &root, &options).unwrap();
        assert!(lazy.records.iter().all(|r| r.lambda_max.is_none()));
        let mut adv = builtin_adversary(AdversaryKind::StreamingPca, n, &root).unwrap();
        let dense = run_online(adv.as_mut(), Strategy::Rank1Lanczos, &schedule, &root, &RunOptions::default())
            .unwrap();
        let (lo, hi) = lazy.summary.regret_interval();
        assert!(dense.summary.regret >= lo - 1e-8 && dense.summary.regret <= hi + 1e-8);
        assert!(matches!(
            run_online(
                builtin_adversary(AdversaryKind::StreamingPca, n, &root).unwrap().as_mut(),
                Strategy::Rank1Exact,
                &schedule,
                &root,
                &options
            ),
            Err(Error::DenseLimitExceeded { .. })
        ));
    }
}
