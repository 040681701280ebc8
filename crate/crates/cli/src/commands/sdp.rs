use mmw_sketch::sdp::{gap_bound, solve_feasibility, SolverConfig};
use mmw_sketch::SeededRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::SdpConfig;
use crate::error::CliResult;
use crate::fixtures::resolve_instance;
use crate::output::{ensure_dir, write_json, Envelope};

pub const SUMMARY_FILE: &str = "sdp_summary.json";

#[derive(Debug, Clone, Serialize)]
pub struct SdpRun {
    pub seed: u64,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub eta: f64,
    pub omega: f64,
    pub gap: f64,
    pub gap_interval: (f64, f64),
    /// Expected-gap bound at the schedule's `(eta, T)`.
    pub gap_bound: f64,
    pub s_lower: f64,
    pub s_upper: f64,
    pub verdict: String,
    pub matvecs: u64,
    pub partial: bool,
    pub simplex_regret: f64,
    pub simplex_regret_bound: f64,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SdpResults {
    pub n: usize,
    pub m: usize,
    pub runs: Vec<SdpRun>,
    pub mean_gap: f64,
    pub mean_gap_within_epsilon: bool,
}

pub fn sdp_feas(cfg: &SdpConfig) -> CliResult<SdpResults> {
    let inst = resolve_instance(&cfg.instance)?;
    ensure_dir(&cfg.sweep.out_dir)?;
    let solver = SolverConfig {
        delta: cfg.delta,
        use_lanczos: cfg.lanczos,
        k0: cfg.k0,
        dense_limit: cfg.dense_limit,
        ..SolverConfig::new(cfg.epsilon)
    };
    let runs = cfg
        .sweep
        .seed_list()
        .into_par_iter()
        .map(|seed| {
            let r = solve_feasibility(&inst, &solver, &SeededRng::new(seed))?;
            Ok(SdpRun {
                seed,
                horizon: r.iterate.t,
                eta: r.schedule.eta,
                omega: r.omega,
                gap: r.gap.value,
                gap_interval: r.gap.interval,
                gap_bound: gap_bound(r.omega, inst.n(), inst.m(), r.schedule.eta, r.schedule.horizon),
                s_lower: r.s_lower,
                s_upper: r.s_upper,
                verdict: r.verdict.name().to_string(),
                matvecs: r.matvecs,
                partial: r.partial,
                simplex_regret: r.simplex_regret,
                simplex_regret_bound: r.simplex_regret_bound,
                wall_ns: r.wall_ns,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mean_gap = runs.iter().map(|r| r.gap_interval.1).sum::<f64>() / runs.len() as f64;
    let results = SdpResults {
        n: inst.n(),
        m: inst.m(),
        mean_gap,
        mean_gap_within_epsilon: mean_gap <= cfg.epsilon,
        runs,
    };
    write_json(&cfg.sweep.out_dir.join(SUMMARY_FILE), &Envelope::new("sdp-feas", cfg, &results))?;
    Ok(results)
}
