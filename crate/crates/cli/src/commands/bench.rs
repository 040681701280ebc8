use std::time::Instant;

use mmw_sketch::lanczos::expm_multiply;
use mmw_sketch::linalg::{dense_eigh, sample_unit_sphere};
use mmw_sketch::{SeededRng, SparseSymOperator, SymmetricMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{BenchConfig, SpectrumKind};
use crate::error::CliResult;
use crate::output::{ensure_dir, write_versioned_csv, BENCH_LANCZOS_SCHEMA};

pub const BENCH_FILE: &str = "bench_lanczos.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub spectrum_kind: String,
    pub k: usize,
    pub rel_err_vs_oracle: f64,
    pub matvecs: u64,
    pub wall_ns: u64,
    pub seed: u64,
}

/// Test matrix of the requested kind with operator norm `norm`.
pub fn test_matrix(kind: SpectrumKind, n: usize, norm: f64, rng: &mut SeededRng) -> CliResult<SymmetricMatrix> {
    Ok(match kind {
        SpectrumKind::Diagonal => {
            let diag: Vec<f64> = (0..n).map(|_| norm * (2.0 * rng.uniform() - 1.0)).collect();
            SymmetricMatrix::from_diagonal(&diag)
        }
        SpectrumKind::Sparse => {
            let density = (8.0 / n as f64).min(1.0);
            let raw = SymmetricMatrix::from_upper_fn(n, |i, j| {
                if i == j || rng.uniform() < density {
                    rng.standard_normal()
                } else {
                    0.0
                }
            });
            raw.scaled(norm / raw.op_norm()?)
        }
    })
}

fn case(cfg: &BenchConfig, seed: u64, n: usize, kind: SpectrumKind) -> CliResult<Vec<BenchRow>> {
    let label = (n as u64) << 8 | kind as u64;
    let mut rng = SeededRng::new(seed).split(label);
    let y = test_matrix(kind, n, cfg.norm, &mut rng)?;
    let b = sample_unit_sphere(n, &mut rng);
    let exact = dense_eigh(&y)?.map_spectrum(f64::exp).mul_vec(&b);
    let op = match kind {
        SpectrumKind::Diagonal => {
            SparseSymOperator::diagonal((0..n).map(|i| y.get(i, i)).collect())
        }
        SpectrumKind::Sparse => SparseSymOperator::from_dense(&y),
    };
    cfg.ks_for(n)
        .into_iter()
        .map(|k| {
            op.reset_matvec_count();
            let started = Instant::now();
            let approx = expm_multiply(&op, &b, k)?;
            let wall_ns = started.elapsed().as_nanos() as u64;
            Ok(BenchRow {
                n,
                spectrum_kind: kind.name().to_string(),
                k,
                rel_err_vs_oracle: (approx - &exact).norm() / exact.norm(),
                matvecs: op.matvec_count(),
                wall_ns,
                seed,
            })
        })
        .collect()
}

/// Sweeps `(seed, n, spectrum, k)` and writes `bench_lanczos.csv`.
pub fn bench_lanczos(cfg: &BenchConfig) -> CliResult<Vec<BenchRow>> {
    ensure_dir(&cfg.sweep.out_dir)?;
    let cases: Vec<(u64, usize, SpectrumKind)> = cfg
        .sweep
        .seed_list()
        .into_iter()
        .flat_map(|seed| {
            cfg.sizes
                .iter()
                .flat_map(move |&n| cfg.spectra.iter().map(move |&kind| (seed, n, kind)))
        })
        .collect();
    let rows: Vec<BenchRow> = cases
        .into_par_iter()
        .map(|(seed, n, kind)| case(cfg, seed, n, kind))
        .collect::<CliResult<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    write_versioned_csv(&cfg.sweep.out_dir.join(BENCH_FILE), BENCH_LANCZOS_SCHEMA, &rows)?;
    Ok(rows)
}
