//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Seeds are fixed per criterion and never tuned.

use std::error::Error;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::Parser;
use mmw_sketch::lanczos::{expm_multiply, required_iterations, DEFAULT_K0};
use mmw_sketch::linalg::{dense_eigh, digamma, sample_dirichlet_half, sample_unit_sphere};
use mmw_sketch::online::{
    builtin_adversary, haar_orthogonal, high_probability_regret_bound, run_online, AdversaryKind,
    RunOptions, Schedule, Strategy,
};
use mmw_sketch::projections::{
    estimate_avg_projection_direct, estimate_avg_projection_dirichlet, mmw_projection,
    rank1_projection, rank1_projection_lanczos, trace_norm_distance, BregmanSampler,
    RunningMoments, ScalarEstimate,
};
use mmw_sketch::sdp::gap_schedule;
use mmw_sketch::{SeededRng, SparseSymOperator, SymmetricMatrix};
use mmw_sketch_cli::commands::bench::{test_matrix, BENCH_FILE};
use mmw_sketch_cli::commands::{self, online, BenchRow, TraceRow};
use mmw_sketch_cli::config::{BenchConfig, Cli, Command, OnlineConfig, SdpConfig, SpectrumKind};
use mmw_sketch_cli::output::{
    read_versioned_csv, strip_volatile, strip_volatile_csv, BENCH_LANCZOS_SCHEMA,
    ONLINE_TRACE_SCHEMA,
};
use rayon::prelude::*;

type Outcome = Result<(bool, String), Box<dyn Error + Send + Sync>>;

fn parse(args: &[&str]) -> Command {
    Cli::try_parse_from(std::iter::once("mmw-sketch").chain(args.iter().copied()))
        .expect("valid arguments")
        .command
}

fn online_config(args: &[&str]) -> OnlineConfig {
    match parse(args) {
        Command::OnlineEig(a) => OnlineConfig::resolve(a).expect("valid online config"),
        _ => unreachable!(),
    }
}

fn sdp_config(args: &[&str]) -> SdpConfig {
    match parse(args) {
        Command::SdpFeas(a) => SdpConfig::resolve(a).expect("valid sdp config"),
        _ => unreachable!(),
    }
}

fn bench_config(args: &[&str]) -> BenchConfig {
    match parse(args) {
        Command::BenchLanczos(a) => BenchConfig::resolve(a).expect("valid bench config"),
        _ => unreachable!(),
    }
}

fn random_with_norm(n: usize, norm: f64, rng: &mut SeededRng) -> SymmetricMatrix {
    let a = SymmetricMatrix::from_upper_fn(n, |_, _| rng.standard_normal());
    a.scaled(norm / a.op_norm().expect("finite"))
}

fn random_psd_with_norm(n: usize, norm: f64, rng: &mut SeededRng) -> SymmetricMatrix {
    let mut a = SymmetricMatrix::zeros(n);
    for _ in 0..n {
        a.add_outer(&rng.normal_vector(n), 1.0);
    }
    a.scaled(norm / a.op_norm().expect("finite"))
}

fn max_dev(a: &SymmetricMatrix, b: &SymmetricMatrix) -> f64 {
    (a.as_matrix() - b.as_matrix()).amax()
}

fn averaged_projection_cross_oracle() -> Outcome {
    let root = SeededRng::new(101);
    let results: Vec<(usize, f64)> = (0..20u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.split(i);
            let y = random_with_norm(4, 3.0, &mut rng);
            let a = estimate_avg_projection_direct(&y, 100_000, &mut rng.split(1))?;
            let b = estimate_avg_projection_dirichlet(&y, 100_000, &mut rng.split(2))?;
            let mut outside = 0;
            let mut worst: f64 = 0.0;
            for r in 0..4 {
                for c in r..4 {
                    let se = a.std_err[(r, c)].hypot(b.std_err[(r, c)]);
                    let z = (a.mean.get(r, c) - b.mean.get(r, c)).abs() / se;
                    outside += usize::from(z > 3.0);
                    worst = worst.max(z);
                }
            }
            Ok((outside, worst))
        })
        .collect::<Result<_, mmw_sketch::Error>>()?;
    let outside: usize = results.iter().map(|r| r.0).sum();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok((
        outside == 0,
        format!("{outside}/200 entries beyond 3 SE, largest {worst:.2} SE"),
    ))
}

fn rank1_exactness() -> Outcome {
    let y = SymmetricMatrix::from_diagonal(&[4f64.ln(), 0.0]);
    let u = nalgebra_vec(&[1.0, 1.0]).normalize();
    let want = SymmetricMatrix::from_upper_fn(2, |i, j| [[4.0, 2.0], [2.0, 1.0]][i][j] / 5.0);
    let hand = max_dev(&rank1_projection(&y, &u)?.to_dense(), &want);

    let mut rng = SeededRng::new(102);
    let (mut shift, mut rotation) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let n = 2 + i % 7;
        let y = random_with_norm(n, 10.0 * rng.uniform(), &mut rng);
        let u = sample_unit_sphere(n, &mut rng);
        let x = rank1_projection(&y, &u)?.to_dense();
        let xm = mmw_projection(&y)?.to_dense();
        for c in [-50.0, 50.0, 100.0 * rng.uniform() - 50.0] {
            let ys = y.shifted(c);
            shift = shift.max(max_dev(&x, &rank1_projection(&ys, &u)?.to_dense()));
            shift = shift.max(max_dev(&xm, &mmw_projection(&ys)?.to_dense()));
        }
        let r = haar_orthogonal(n, &mut rng);
        let yr = y.congruence(&r);
        let ur = &r * &u;
        rotation = rotation.max(max_dev(&x.congruence(&r), &rank1_projection(&yr, &ur)?.to_dense()));
        rotation = rotation.max(max_dev(&xm.congruence(&r), &mmw_projection(&yr)?.to_dense()));
    }
    Ok((
        hand <= 1e-9 && shift <= 1e-9 && rotation <= 1e-9,
        format!("hand example {hand:.1e}, shift {shift:.1e}, rotation {rotation:.1e}"),
    ))
}

fn nalgebra_vec(x: &[f64]) -> mmw_sketch::nalgebra::DVector<f64> {
    mmw_sketch::nalgebra::DVector::from_column_slice(x)
}

fn lanczos_accuracy() -> Outcome {
    let (n, norm, eps, delta) = (64, 8.0, 0.01, 0.1);
    let mut rng = SeededRng::new(103);
    let y = test_matrix(SpectrumKind::Sparse, n, norm, &mut rng)?;
    let op = SparseSymOperator::from_dense(&y);
    let k = required_iterations(norm, eps, delta, n, DEFAULT_K0).min(n);
    let mut good = 0;
    for _ in 0..200 {
        let u = sample_unit_sphere(n, &mut rng);
        let exact = rank1_projection(&y, &u)?;
        let approx = rank1_projection_lanczos(&op, &u, k)?;
        good += usize::from(trace_norm_distance(&exact, &approx)? <= eps);
    }
    let eig = dense_eigh(&y)?;
    let expy = eig.map_spectrum(f64::exp);
    let mut full: f64 = 0.0;
    for _ in 0..20 {
        let b = sample_unit_sphere(n, &mut rng);
        let want = expy.mul_vec(&b);
        full = full.max((expm_multiply(&op, &b, n)? - &want).norm() / want.norm());
    }
    Ok((
        good >= 180 && full <= 1e-8,
        format!("k = {k}: {good}/200 draws within {eps}; k = n relative error {full:.1e}"),
    ))
}

struct RegretRuns {
    runs: Vec<online::OnlineRun>,
    mean_regret: f64,
    expected_bound: f64,
    mean_average_regret: f64,
    average_regret_bound: f64,
    eta: f64,
}

fn regret_runs(dir: &Path) -> Result<RegretRuns, Box<dyn Error + Send + Sync>> {
    let out = dir.to_str().expect("utf-8 path");
    let cfg = online_config(&[
        "online-eig", "--n", "32", "--T", "5000", "--strategy", "rank1", "--adversary",
        "random_rotation", "--seed", "104", "--seeds", "50", "--out-dir", out,
    ]);
    let r = commands::online_eig(&cfg)?;
    for run in &r.runs {
        let rows: Vec<TraceRow> = read_versioned_csv(&dir.join(&run.trace_file), ONLINE_TRACE_SCHEMA)?;
        assert_eq!(rows.len(), 5000);
    }
    Ok(RegretRuns {
        mean_regret: r.mean_regret,
        expected_bound: r.expected_bound,
        mean_average_regret: r.mean_average_regret,
        average_regret_bound: r.average_regret_bound,
        eta: cfg.eta,
        runs: r.runs,
    })
}

fn expected_regret(r: &RegretRuns) -> Outcome {
    Ok((
        r.mean_regret <= r.expected_bound && r.mean_average_regret <= r.average_regret_bound,
        format!(
            "mean regret {:.2} <= {:.2}; mean average regret {:.5} <= {:.5}",
            r.mean_regret, r.expected_bound, r.mean_average_regret, r.average_regret_bound
        ),
    ))
}

fn high_probability_regret(r: &RegretRuns) -> Outcome {
    let bound = high_probability_regret_bound(32, r.eta, 5000, 0.05);
    let passes = r.runs.iter().take(20).filter(|run| run.regret_upper <= bound).count();
    let worst = r.runs.iter().take(20).map(|run| run.regret_upper).fold(f64::MIN, f64::max);
    Ok((
        passes >= 19,
        format!("{passes}/20 seeds within {bound:.2} (largest regret {worst:.2})"),
    ))
}

fn refined_regret(dir: &Path) -> Outcome {
    let cfg = online_config(&[
        "online-eig", "--n", "16", "--T", "2000", "--strategy", "rank1", "--adversary",
        "psd_random", "--eta", "0.16666666666666666", "--refined", "--seed", "106",
        "--seeds", "50", "--out-dir", dir.to_str().expect("utf-8 path"),
    ]);
    let r = commands::online_eig(&cfg)?;
    let bound = r.mean_refined_bound.ok_or("refined bound not computed")?;
    let per_run = r.runs.iter().filter(|run| run.within_refined_bound == Some(true)).count();
    Ok((
        r.refined_bound_holds == Some(true),
        format!(
            "mean regret {:.2} <= mean bound {bound:.2} ({per_run}/50 runs individually)",
            r.mean_regret
        ),
    ))
}

/// Per-draw value whose mean must not exceed `bound + 3 SE`.
fn sampling_test(
    samples: usize,
    bound: f64,
    sampler: &BregmanSampler,
    f: impl Fn(&mmw_sketch::projections::BregmanTerms) -> f64,
    rng: &mut SeededRng,
) -> Result<(bool, f64), mmw_sketch::Error> {
    let mut acc = RunningMoments::default();
    for _ in 0..samples {
        acc.push(f(&sampler.draw(rng)?));
    }
    let est = acc.estimate();
    let z = (est.mean - bound) / est.std_err.max(f64::MIN_POSITIVE);
    Ok((est.mean <= bound + 3.0 * est.std_err, z))
}

fn smoothness_suite() -> Outcome {
    const SAMPLES: usize = 100_000;
    let root = SeededRng::new(107);
    let cases: Vec<(usize, u64)> = (0..3).flat_map(|kind| (0..50).map(move |i| (kind, i))).collect();
    let results: Vec<(usize, bool, f64)> = cases
        .into_par_iter()
        .map(|(kind, i)| {
            let mut rng = root.split(kind as u64 * 1000 + i);
            let n = 2 + (i as usize) % 7;
            let y = random_with_norm(n, 6.0 * rng.uniform(), &mut rng);
            let (ok, z) = match kind {
                0 => {
                    let d = random_with_norm(n, 0.5 * rng.uniform(), &mut rng);
                    let norm = d.op_norm()?;
                    let mut yp = y.clone();
                    yp.add_scaled(&d, 1.0);
                    let s = BregmanSampler::new(&y, &yp)?;
                    sampling_test(SAMPLES, 1.5 * norm * norm, &s, |t| t.divergence(), &mut rng)?
                }
                1 => {
                    let d = random_psd_with_norm(n, rng.uniform() / 6.0, &mut rng);
                    let norm = d.op_norm()?;
                    let mut yp = y.clone();
                    yp.add_scaled(&d, 1.0);
                    let s = BregmanSampler::new(&y, &yp)?;
                    sampling_test(
                        SAMPLES,
                        0.0,
                        &s,
                        |t| t.divergence() - 3.0 * norm * t.shift_inner(),
                        &mut rng,
                    )?
                }
                _ => {
                    let yp = random_with_norm(n, 10.0 * rng.uniform(), &mut rng);
                    let s = BregmanSampler::new(&y, &yp)?;
                    let bound = (4.0 * n as f64).ln();
                    sampling_test(SAMPLES, bound, &s, |t| t.inner_yp - t.log_quad_yp, &mut rng)?
                }
            };
            Ok((kind, ok, z))
        })
        .collect::<Result<_, mmw_sketch::Error>>()?;
    let mut passed = [0usize; 3];
    let mut worst = [f64::MIN; 3];
    for (kind, ok, z) in results {
        passed[kind] += usize::from(ok);
        worst[kind] = worst[kind].max(z);
    }
    Ok((
        passed.iter().all(|p| *p == 50),
        format!(
            "smoothness {}/50, refined {}/50, diameter {}/50 (largest z {:.2}, {:.2}, {:.2})",
            passed[0], passed[1], passed[2], worst[0], worst[1], worst[2]
        ),
    ))
}

fn lanczos_play() -> Outcome {
    let (n, horizon) = (64, 2000);
    let options = RunOptions {
        record_running_lambda: false,
        ..RunOptions::default()
    };
    let schedule = Schedule::standard(n, horizon, 0.1)?;
    let results: Vec<(f64, u64, u64)> = (0..50u64)
        .into_par_iter()
        .map(|s| {
            let root = SeededRng::new(108_000 + s);
            let play = |strategy| {
                let mut adv = builtin_adversary(AdversaryKind::RandomRotation, n, &root)?;
                run_online(adv.as_mut(), strategy, &schedule, &root, &options)
            };
            let exact = play(Strategy::Rank1Exact)?;
            let approx = play(Strategy::Rank1Lanczos)?;
            Ok((
                approx.summary.total_gain - exact.summary.total_gain,
                approx.summary.total_matvecs,
                approx.summary.total_k,
            ))
        })
        .collect::<Result<_, mmw_sketch::Error>>()?;
    let within = results.iter().filter(|r| r.0 >= -1.0).count();
    let worst_gap = results.iter().map(|r| r.0).fold(f64::MAX, f64::min);
    let worst_count = results
        .iter()
        .map(|r| (r.1 as f64 - r.2 as f64).abs() / r.2 as f64)
        .fold(0.0, f64::max);
    Ok((
        within * 10 >= 50 * 9 && worst_count <= 0.05,
        format!(
            "{within}/50 seeds within 1 of exact play (worst {worst_gap:.2e}); matvecs vs sum k_t off by {:.2}%",
            100.0 * worst_count
        ),
    ))
}

fn sdp_solver(dir: &Path) -> Outcome {
    let out = dir.to_str().expect("utf-8 path");
    let cfg = sdp_config(&[
        "sdp-feas", "--instance", "builtin:random20", "--epsilon", "0.25", "--seed", "109",
        "--seeds", "20", "--out-dir", out,
    ]);
    let r = commands::sdp_feas(&cfg)?;
    let expected_t = gap_schedule(1.0, 20, 10, 0.25)?.horizon;
    let schedule_ok = expected_t == 856
        && r.runs.iter().all(|run| run.horizon == expected_t && run.omega <= 1.0 + 1e-9);

    let cfg2 = sdp_config(&[
        "sdp-feas", "--instance", "builtin:symmetric2", "--epsilon", "0.25", "--seed", "109",
        "--out-dir", out,
    ]);
    let s = &commands::sdp_feas(&cfg2)?.runs[0];
    let bracket = s.s_lower <= 0.0 && 0.0 <= s.s_upper && s.s_upper - s.s_lower <= 0.25;
    Ok((
        schedule_ok && r.mean_gap <= 0.25 && bracket,
        format!(
            "T = {} on every seed: {schedule_ok}; mean certified gap {:.4}; 2x2 interval [{:.4}, {:.4}] ({})",
            r.runs[0].horizon, r.mean_gap, s.s_lower, s.s_upper, s.verdict
        ),
    ))
}

fn dirichlet_oracle() -> Outcome {
    let root = SeededRng::new(110);
    let mut ok = (digamma(1.0) - digamma(0.5) - 2.0 * std::f64::consts::LN_2).abs() < 1e-12;
    let mut detail = Vec::new();
    for n in [2usize, 8, 32] {
        let mut rng = root.split(n as u64);
        let target = digamma(n as f64 / 2.0) - digamma(0.5);
        let est = ScalarEstimate::from_samples(
            (0..1_000_000).map(|_| -sample_dirichlet_half(n, &mut rng)[0].ln()),
        );
        let z = (est.mean - target) / est.std_err;
        ok &= z.abs() <= 3.0;
        detail.push(format!("n = {n}: {:.4} vs {target:.4} ({z:+.2} SE)", est.mean));
    }
    Ok((ok, detail.join("; ")))
}

fn run_all_commands(out: &Path) -> Result<(), Box<dyn Error + Send + Sync>> {
    let o = out.to_str().expect("utf-8 path");
    commands::online_eig(&online_config(&[
        "online-eig", "--n", "12", "--T", "300", "--strategy", "rank1-lanczos", "--seed", "7",
        "--seeds", "3", "--out-dir", o,
    ]))?;
    commands::sdp_feas(&sdp_config(&[
        "sdp-feas", "--instance", "builtin:random20", "--epsilon", "0.5", "--seed", "7",
        "--seeds", "2", "--out-dir", o,
    ]))?;
    commands::bench_lanczos(&bench_config(&[
        "bench-lanczos", "--sizes", "8,32", "--seed", "7", "--seeds", "2", "--out-dir", o,
    ]))?;
    Ok(())
}

fn normalized(path: &Path) -> Result<String, Box<dyn Error + Send + Sync>> {
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        let mut v: serde_json::Value = serde_json::from_str(&text)?;
        strip_volatile(&mut v);
        Ok(v.to_string())
    } else {
        Ok(strip_volatile_csv(&text))
    }
}

fn snapshot(dir: &Path) -> Result<Vec<(String, String)>, Box<dyn Error + Send + Sync>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        files.push((name, normalized(&path)?));
    }
    files.sort();
    Ok(files)
}

/// Runs every subcommand twice into the same directory, the second time on a
/// three-thread pool, and compares the payloads.
fn determinism(dir: &Path) -> Outcome {
    let out = dir.join("out");
    run_all_commands(&out)?;
    let first = snapshot(&out)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build()?;
    pool.install(|| run_all_commands(&out))?;
    let second = snapshot(&out)?;
    let mismatched: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();

    let rows: Vec<BenchRow> = read_versioned_csv(&out.join(BENCH_FILE), BENCH_LANCZOS_SCHEMA)?;
    let bumped = dir.join("bumped.csv");
    let text = fs::read_to_string(out.join(BENCH_FILE))?;
    fs::write(&bumped, text.replacen("bench-lanczos/1", "bench-lanczos/2", 1))?;
    let rejects_unknown = read_versioned_csv::<BenchRow>(&bumped, BENCH_LANCZOS_SCHEMA).is_err();
    Ok((
        first.len() == second.len() && mismatched.is_empty() && !rows.is_empty() && rejects_unknown,
        format!(
            "{} files compared, {} differ {mismatched:?}; unknown schema rejected: {rejects_unknown}",
            first.len(),
            mismatched.len()
        ),
    ))
}

struct Harness {
    /// Criterion ids named on the command line; empty runs all.
    selected: Vec<u32>,
    failures: usize,
}

impl Harness {
    fn check(&mut self, id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) {
        if !self.selected.is_empty() && !self.selected.contains(&id) {
            return;
        }
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= b);
        let (passed, detail) = match outcome {
            Ok((ok, detail)) => (ok && in_time, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        let timing = match budget {
            Some(b) => format!("{:.1}s of {}s", elapsed.as_secs_f64(), b.as_secs()),
            None => format!("{:.1}s", elapsed.as_secs_f64()),
        };
        println!(
            "{} AC{id} {name}: {detail} [{timing}]",
            if passed { "PASS" } else { "FAIL" }
        );
        self.failures += usize::from(!passed);
    }
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mins = |m: u64| Some(Duration::from_secs(60 * m));
    let selected = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut h = Harness { selected, failures: 0 };

    h.check(1, "averaged-projection cross-oracle", Some(Duration::from_secs(60)), averaged_projection_cross_oracle);
    h.check(2, "rank-1 projection exactness", Some(Duration::from_secs(5)), rank1_exactness);
    h.check(3, "Lanczos accuracy", mins(2), lanczos_accuracy);

    let mut regret = None;
    h.check(4, "expected regret bound", mins(5), || {
        let r = regret_runs(&tmp.path().join("regret"))?;
        let outcome = expected_regret(&r);
        regret = Some(r);
        outcome
    });
    h.check(5, "high-probability regret bound", None, || {
        high_probability_regret(regret.as_ref().ok_or("regret runs unavailable")?)
    });
    h.check(6, "refined PSD regret bound", mins(3), || refined_regret(&tmp.path().join("refined")));
    h.check(7, "smoothness and diameter sampling", mins(5), smoothness_suite);
    h.check(8, "Lanczos-approximate play", None, lanczos_play);
    h.check(9, "SDP feasibility solver", mins(3), || sdp_solver(&tmp.path().join("sdp")));
    h.check(10, "Dirichlet(1/2) log-moment oracle", None, dirichlet_oracle);
    h.check(11, "determinism", None, || determinism(&tmp.path().join("determinism")));

    println!("{} criteria failed", h.failures);
    if h.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
