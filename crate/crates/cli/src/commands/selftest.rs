use mmw_sketch::linalg::{digamma, sample_dirichlet_half, sample_unit_sphere};
use mmw_sketch::projections::{
    estimate_avg_projection_direct, estimate_avg_projection_dirichlet, mmw_projection,
    rank1_projection, trace_norm_distance, ScalarEstimate,
};
use mmw_sketch::{SeededRng, SymmetricMatrix};
use serde::Serialize;

use crate::config::SelftestConfig;
use crate::error::CliResult;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_with_norm(n: usize, norm: f64, rng: &mut SeededRng) -> CliResult<SymmetricMatrix> {
    let a = SymmetricMatrix::from_upper_fn(n, |_, _| rng.standard_normal());
    Ok(a.scaled(norm / a.op_norm()?))
}

/// Direct sphere sampling and the Dirichlet eigenbasis estimator of the
/// averaged projection agree within three combined standard errors.
fn averaged_projection_oracles(cfg: &SelftestConfig, rng: &mut SeededRng) -> CliResult<CheckResult> {
    let y = random_with_norm(4, 3.0, rng)?;
    let a = estimate_avg_projection_direct(&y, cfg.samples, rng)?;
    let b = estimate_avg_projection_dirichlet(&y, cfg.samples, rng)?;
    let mut worst: f64 = 0.0;
    for i in 0..4 {
        for j in i..4 {
            let se = a.std_err[(i, j)].hypot(b.std_err[(i, j)]);
            let z = (a.mean.get(i, j) - b.mean.get(i, j)).abs() / se.max(f64::MIN_POSITIVE);
            worst = worst.max(z);
        }
    }
    Ok(CheckResult {
        name: "averaged-projection cross-oracle (4x4)",
        passed: worst <= 3.0,
        detail: format!("largest entrywise deviation {worst:.2} standard errors"),
    })
}

fn shift_invariance(rng: &mut SeededRng) -> CliResult<CheckResult> {
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let y = random_with_norm(6, 4.0, rng)?;
        let u = sample_unit_sphere(6, rng);
        let base = rank1_projection(&y, &u)?;
        let base_mmw = mmw_projection(&y)?;
        for c in [-50.0, -1.5, 0.5, 50.0] {
            let shifted = y.shifted(c);
            let f0 = base.factor().expect("rank one");
            let f1 = rank1_projection(&shifted, &u)?;
            worst = worst.max((f0 - f1.factor().expect("rank one")).amax());
            worst = worst.max(trace_norm_distance(&base_mmw, &mmw_projection(&shifted)?)?);
        }
    }
    Ok(CheckResult {
        name: "shift invariance (|c| <= 50)",
        passed: worst <= 1e-10,
        detail: format!("largest deviation {worst:.1e}"),
    })
}

/// `E[-log w_1] = psi(1) - psi(1/2) = 2 ln 2` for `w ~ Dirichlet(1/2, 1/2)`.
fn dirichlet_log_moment(cfg: &SelftestConfig, rng: &mut SeededRng) -> CliResult<CheckResult> {
    let target = digamma(1.0) - digamma(0.5);
    let closed_form = 2.0 * std::f64::consts::LN_2;
    let est = ScalarEstimate::from_samples((0..cfg.samples).map(|_| -sample_dirichlet_half(2, rng)[0].ln()));
    let z = (est.mean - target).abs() / est.std_err;
    Ok(CheckResult {
        name: "Dirichlet(1/2) log-moment, n = 2",
        passed: (target - closed_form).abs() < 1e-12 && z <= 3.0,
        detail: format!(
            "mean {:.5} vs {:.5} ({z:.2} standard errors)",
            est.mean, target
        ),
    })
}

pub fn selftest(cfg: &SelftestConfig) -> CliResult<Vec<CheckResult>> {
    let root = SeededRng::new(cfg.seed);
    Ok(vec![
        averaged_projection_oracles(cfg, &mut root.split(1))?,
        shift_invariance(&mut root.split(2))?,
        dirichlet_log_moment(cfg, &mut root.split(3))?,
    ])
}
