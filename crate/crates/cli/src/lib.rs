//! Command-line front end for the `mmw-sketch` experiments.
//!
//! Subcommands write their tables and summaries under an output directory
//! (`--out-dir`, then the config file, then `MMW_SKETCH_OUT_DIR`, then
//! `./mmw-sketch-out`) and print a short report to stdout.

pub mod commands;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod output;

use config::{BenchConfig, Cli, Command, OnlineConfig, SdpConfig, SelftestConfig};
pub use error::{CliError, CliResult, EXIT_NUMERICAL, EXIT_USAGE};

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::OnlineEig(args) => {
            let cfg = OnlineConfig::resolve(args)?;
            if cfg.eta_clamped {
                eprintln!("note: eta clamped to 1/6 for the refined bound");
            }
            let r = commands::online_eig(&cfg)?;
            println!(
                "online-eig n={} T={} strategy={} adversary={} eta={:.6}",
                cfg.n,
                cfg.horizon,
                cfg.core_strategy().name(),
                cfg.adversary.name(),
                cfg.eta
            );
            for run in &r.runs {
                println!(
                    "  seed {:>4}  regret {:>10.4}  hp bound {:>10.4}  matvecs {}",
                    run.seed, run.regret, run.high_probability_bound, run.total_matvecs
                );
            }
            println!(
                "mean regret {:.4} ± {:.4}  expected bound {:.4} ({})",
                r.mean_regret,
                r.regret_std_err,
                r.expected_bound,
                if r.expected_bound_holds { "holds" } else { "violated" }
            );
            if let (Some(b), Some(ok)) = (r.mean_refined_bound, r.refined_bound_holds) {
                println!("refined bound {b:.4} ({})", if ok { "holds" } else { "violated" });
            }
            println!("wrote {}", cfg.sweep.out_dir.display());
        }
        Command::SdpFeas(args) => {
            let cfg = SdpConfig::resolve(args)?;
            let r = commands::sdp_feas(&cfg)?;
            println!("sdp-feas {} n={} m={} epsilon={}", cfg.instance, r.n, r.m, cfg.epsilon);
            for run in &r.runs {
                println!(
                    "  seed {:>4}  T {:>7}  gap {:.5}  s in [{:.5}, {:.5}]  {}",
                    run.seed, run.horizon, run.gap, run.s_lower, run.s_upper, run.verdict
                );
            }
            println!("mean gap {:.5}", r.mean_gap);
            println!("wrote {}", cfg.sweep.out_dir.display());
        }
        Command::BenchLanczos(args) => {
            let cfg = BenchConfig::resolve(args)?;
            let rows = commands::bench_lanczos(&cfg)?;
            println!("{:>6} {:>9} {:>5} {:>12} {:>8}", "n", "spectrum", "k", "rel_err", "matvecs");
            for row in rows.iter().filter(|r| r.seed == cfg.sweep.seed) {
                println!(
                    "{:>6} {:>9} {:>5} {:>12.3e} {:>8}",
                    row.n, row.spectrum_kind, row.k, row.rel_err_vs_oracle, row.matvecs
                );
            }
            println!("wrote {}", cfg.sweep.out_dir.join(commands::bench::BENCH_FILE).display());
        }
        Command::Selftest(args) => {
            let cfg = SelftestConfig::resolve(args)?;
            let checks = commands::selftest(&cfg)?;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::CheckFailed(format!("{failed} self-check(s) failed")));
            }
        }
    }
    Ok(())
}
