use std::time::Instant;

use mmw_sketch::online::{
    builtin_adversary, default_eta, expected_regret_bound, high_probability_regret_bound,
    refined_regret_bound, run_online, GainClass, RegretTrace, RunOptions, Schedule,
};
use mmw_sketch::SeededRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::OnlineConfig;
use crate::error::CliResult;
use crate::output::{ensure_dir, write_json, write_versioned_csv, Envelope, ONLINE_TRACE_SCHEMA};

pub const SUMMARY_FILE: &str = "online_summary.json";

pub fn trace_file(seed: u64) -> String {
    format!("online_trace_seed{seed}.csv")
}

/// One row of a per-seed trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub gain: f64,
    pub cumulative_gain: f64,
    pub lambda_max: Option<f64>,
    pub k_t: Option<usize>,
    pub matvecs: u64,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OnlineRun {
    pub seed: u64,
    pub regret: f64,
    /// Upper end of the regret interval when `lambda_max` is estimated.
    pub regret_upper: f64,
    pub average_regret: f64,
    pub total_gain: f64,
    pub lambda_max: f64,
    pub lambda_max_slack: f64,
    pub total_matvecs: u64,
    pub total_k: u64,
    pub expected_bound: f64,
    pub high_probability_bound: f64,
    pub within_high_probability_bound: bool,
    /// Present for PSD gain classes with `eta <= 1/6`.
    pub refined_bound: Option<f64>,
    pub within_refined_bound: Option<bool>,
    pub trace_file: String,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OnlineResults {
    pub runs: Vec<OnlineRun>,
    pub mean_regret: f64,
    pub regret_std_err: f64,
    pub mean_average_regret: f64,
    pub expected_bound: f64,
    pub expected_bound_holds: bool,
    /// `sqrt(6 log(4n) / T)`, the average-regret bound at the default step size.
    pub average_regret_bound: f64,
    /// Only judged when the default step size was used.
    pub average_regret_bound_holds: Option<bool>,
    pub high_probability_passes: usize,
    pub mean_refined_bound: Option<f64>,
    pub refined_bound_holds: Option<bool>,
}

fn rows(trace: &RegretTrace) -> Vec<TraceRow> {
    trace
        .records
        .iter()
        .map(|r| TraceRow {
            t: r.t,
            gain: r.gain,
            cumulative_gain: r.cumulative_gain,
            lambda_max: r.lambda_max,
            k_t: r.k_t,
            matvecs: r.matvecs,
            wall_ns: r.wall_ns,
        })
        .collect()
}

fn run_seed(cfg: &OnlineConfig, seed: u64) -> CliResult<OnlineRun> {
    let started = Instant::now();
    let root = SeededRng::new(seed);
    let mut adversary = builtin_adversary(cfg.adversary, cfg.n, &root)?;
    let class = adversary.gain_class();
    let schedule = Schedule::new(cfg.n, cfg.horizon, cfg.eta, cfg.delta, cfg.k0)?;
    let options = RunOptions {
        dense_limit: cfg.dense_limit,
        ..RunOptions::default()
    };
    let trace = run_online(adversary.as_mut(), cfg.core_strategy(), &schedule, &root, &options)?;
    let file = trace_file(seed);
    write_versioned_csv(&cfg.sweep.out_dir.join(&file), ONLINE_TRACE_SCHEMA, &rows(&trace))?;

    let s = &trace.summary;
    let (_, regret_upper) = s.regret_interval();
    let expected_bound = expected_regret_bound(cfg.n, cfg.eta, cfg.horizon as f64);
    let high_probability_bound = high_probability_regret_bound(cfg.n, cfg.eta, cfg.horizon, cfg.delta);
    let refined_bound = (class == GainClass::PsdUnit && cfg.eta <= 1.0 / 6.0)
        .then(|| refined_regret_bound(cfg.n, cfg.eta, s.lambda_max + s.lambda_max_slack));
    Ok(OnlineRun {
        seed,
        regret: s.regret,
        regret_upper,
        average_regret: s.average_regret,
        total_gain: s.total_gain,
        lambda_max: s.lambda_max,
        lambda_max_slack: s.lambda_max_slack,
        total_matvecs: s.total_matvecs,
        total_k: s.total_k,
        expected_bound,
        high_probability_bound,
        within_high_probability_bound: regret_upper <= high_probability_bound,
        refined_bound,
        within_refined_bound: refined_bound.map(|b| regret_upper <= b),
        trace_file: file,
        wall_ns: started.elapsed().as_nanos() as u64,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let (sum, count) = xs.fold((0.0, 0), |(s, c), x| (s + x, c + 1));
    (sum / count as f64, count)
}

/// Runs every seed of the sweep (in parallel), writes one trace CSV per seed
/// and `online_summary.json`, and returns the summary.
pub fn online_eig(cfg: &OnlineConfig) -> CliResult<OnlineResults> {
    ensure_dir(&cfg.sweep.out_dir)?;
    let runs = cfg
        .sweep
        .seed_list()
        .into_par_iter()
        .map(|seed| run_seed(cfg, seed))
        .collect::<CliResult<Vec<_>>>()?;

    let (mean_regret, k) = mean(runs.iter().map(|r| r.regret));
    let regret_std_err = if k > 1 {
        let var = runs.iter().map(|r| (r.regret - mean_regret).powi(2)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    } else {
        0.0
    };
    let (mean_average_regret, _) = mean(runs.iter().map(|r| r.average_regret));
    let (mean_upper, _) = mean(runs.iter().map(|r| r.regret_upper));
    let expected_bound = expected_regret_bound(cfg.n, cfg.eta, cfg.horizon as f64);
    let average_regret_bound = (6.0 * (4.0 * cfg.n as f64).ln() / cfg.horizon as f64).sqrt();
    let default_step = cfg.eta == default_eta(cfg.n, cfg.horizon);
    let refined: Option<Vec<f64>> = runs.iter().map(|r| r.refined_bound).collect();
    let mean_refined_bound = refined.map(|b| mean(b.into_iter()).0);

    let results = OnlineResults {
        mean_regret,
        regret_std_err,
        mean_average_regret,
        expected_bound,
        expected_bound_holds: mean_upper <= expected_bound,
        average_regret_bound,
        average_regret_bound_holds: default_step
            .then_some(mean_upper / cfg.horizon as f64 <= average_regret_bound),
        high_probability_passes: runs.iter().filter(|r| r.within_high_probability_bound).count(),
        mean_refined_bound,
        refined_bound_holds: mean_refined_bound.map(|b| mean_upper <= b),
        runs,
    };
    write_json(
        &cfg.sweep.out_dir.join(SUMMARY_FILE),
        &Envelope::new("online-eig", cfg, &results),
    )?;
    Ok(results)
}
