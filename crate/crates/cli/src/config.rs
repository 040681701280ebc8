//! Command-line arguments, config files, and the resolved run configurations.
//!
//! Each subcommand's flags double as the schema of its config-file section,
//! so a TOML file such as
//!
//! ```toml
//! [online-eig]
//! n = 64
//! T = 2000
//! strategy = "rank1-lanczos"
//! ```
//!
//! supplies defaults that explicit flags override.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mmw_sketch::lanczos::DEFAULT_K0;
use mmw_sketch::linalg::DEFAULT_DENSE_LIMIT;
use mmw_sketch::online::{default_eta, AdversaryKind, Strategy};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::default_out_dir;
pub use crate::output::OUT_DIR_ENV;

pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_MC_SAMPLES: usize = 100_000;

#[derive(Debug, Parser)]
#[command(name = "mmw-sketch", version, about = "Rank-1 matrix multiplicative weights experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Play the online eigenvector game and report regret.
    OnlineEig(OnlineArgs),
    /// Run the primal-dual SDP feasibility solver.
    SdpFeas(SdpArgs),
    /// Sweep Lanczos iteration counts against a dense exponential.
    BenchLanczos(BenchArgs),
    /// Run fast internal consistency checks.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyArg {
    ExactMmw,
    Rank1,
    Rank1Lanczos,
    AveragedMc,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct CommonArgs {
    /// TOML file with defaults for this subcommand (flags take precedence).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory [default: $MMW_SKETCH_OUT_DIR, else ./mmw-sketch-out].
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// First seed of the sweep.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of consecutive seeds to run.
    #[arg(long)]
    pub seeds: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct OnlineArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    /// Matrix dimension.
    #[arg(long)]
    pub n: Option<usize>,
    /// Horizon.
    #[arg(long = "T", value_name = "T")]
    #[serde(rename = "T")]
    pub horizon: Option<usize>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyArg>,
    /// random_rotation, fixed_matrix, psd_random, or streaming_pca.
    #[arg(long)]
    pub adversary: Option<String>,
    /// Step size; defaults to sqrt(2 log(4n) / (3T)).
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Constant in the Lanczos iteration schedule.
    #[arg(long)]
    pub k0: Option<f64>,
    #[arg(long)]
    pub dense_limit: Option<usize>,
    /// Monte-Carlo samples per round for the averaged strategy.
    #[arg(long)]
    pub mc_samples: Option<usize>,
    /// PSD-gain experiment: clamps eta to at most 1/6 and reports the refined bound.
    #[arg(long)]
    #[serde(default)]
    pub refined: bool,
    /// Config-file keys that match no field; rejected when the file is loaded.
    #[arg(skip)]
    #[serde(flatten)]
    pub unknown: BTreeMap<String, toml::Value>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct SdpArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    /// Instance file, or `builtin:symmetric2` / `builtin:random20`.
    #[arg(long)]
    pub instance: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    /// Use Lanczos instead of dense exponentials for the primal plays.
    #[arg(long)]
    #[serde(default)]
    pub lanczos: bool,
    #[arg(long)]
    pub k0: Option<f64>,
    #[arg(long)]
    pub dense_limit: Option<usize>,
    /// Config-file keys that match no field; rejected when the file is loaded.
    #[arg(skip)]
    #[serde(flatten)]
    pub unknown: BTreeMap<String, toml::Value>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default)]
pub struct BenchArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    /// Matrix sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Iteration counts; defaults to powers of two below n, plus n.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Spectrum kinds: diagonal, sparse.
    #[arg(long, value_delimiter = ',')]
    pub spectra: Option<Vec<String>>,
    /// Operator norm of the test matrices.
    #[arg(long)]
    pub norm: Option<f64>,
    /// Config-file keys that match no field; rejected when the file is loaded.
    #[arg(skip)]
    #[serde(flatten)]
    pub unknown: BTreeMap<String, toml::Value>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelftestArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte-Carlo samples for the sampling checks.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    #[serde(rename = "online-eig")]
    online_eig: Option<OnlineArgs>,
    #[serde(rename = "sdp-feas")]
    sdp_feas: Option<SdpArgs>,
    #[serde(rename = "bench-lanczos")]
    bench_lanczos: Option<BenchArgs>,
    selftest: Option<SelftestArgs>,
}

fn load_file(path: Option<&Path>) -> CliResult<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: ConfigFile =
        toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let unknown = [
        ("online-eig", file.online_eig.as_ref().map(|a| &a.unknown)),
        ("sdp-feas", file.sdp_feas.as_ref().map(|a| &a.unknown)),
        ("bench-lanczos", file.bench_lanczos.as_ref().map(|a| &a.unknown)),
    ];
    for (section, keys) in unknown {
        if let Some(key) = keys.and_then(|k| k.keys().next()) {
            return Err(CliError::usage(format!(
                "{}: unknown key `{key}` in [{section}]",
                path.display()
            )));
        }
    }
    Ok(file)
}

impl CommonArgs {
    fn overlay(self, file: CommonArgs) -> CommonArgs {
        CommonArgs {
            config: self.config,
            out_dir: self.out_dir.or(file.out_dir),
            seed: self.seed.or(file.seed),
            seeds: self.seeds.or(file.seeds),
        }
    }

    fn resolve(self) -> CliResult<Sweep> {
        let seeds = self.seeds.unwrap_or(1);
        if seeds == 0 {
            return Err(CliError::usage("--seeds must be at least 1"));
        }
        Ok(Sweep {
            out_dir: self.out_dir.unwrap_or_else(default_out_dir),
            seed: self.seed.unwrap_or(0),
            seeds,
        })
    }
}

/// Output location and the seeds `seed, seed + 1, ..., seed + seeds - 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub seeds: usize,
}

impl Sweep {
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed + i).collect()
    }
}

fn check_delta(delta: f64) -> CliResult<f64> {
    if delta > 0.0 && delta < 1.0 {
        Ok(delta)
    } else {
        Err(CliError::usage(format!("delta must lie in (0, 1), got {delta}")))
    }
}

fn check_positive(name: &str, v: f64) -> CliResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::usage(format!("{name} must be positive, got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OnlineConfig {
    #[serde(flatten)]
    pub sweep: Sweep,
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub strategy: StrategyArg,
    pub adversary: AdversaryKind,
    /// The step size requested, if any.
    pub eta_requested: Option<f64>,
    /// The step size actually used.
    pub eta: f64,
    pub eta_clamped: bool,
    pub delta: f64,
    pub k0: f64,
    pub dense_limit: usize,
    pub mc_samples: usize,
    pub refined: bool,
}

impl OnlineConfig {
    pub fn resolve(args: OnlineArgs) -> CliResult<Self> {
        let file = load_file(args.common.config.as_deref())?.online_eig.unwrap_or_default();
        let common = args.common.overlay(file.common);
        let n = args.n.or(file.n).unwrap_or(32);
        let horizon = args.horizon.or(file.horizon).unwrap_or(1000);
        if n == 0 || horizon == 0 {
            return Err(CliError::usage("n and T must be positive"));
        }
        let strategy = args.strategy.or(file.strategy).unwrap_or(StrategyArg::Rank1);
        let adversary: AdversaryKind = args
            .adversary
            .or(file.adversary)
            .as_deref()
            .unwrap_or("random_rotation")
            .parse()
            .map_err(|e: mmw_sketch::Error| CliError::usage(e.to_string()))?;
        let dense_limit = args.dense_limit.or(file.dense_limit).unwrap_or(DEFAULT_DENSE_LIMIT);
        if strategy != StrategyArg::Rank1Lanczos && n > dense_limit {
            let name = strategy.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default();
            return Err(CliError::usage(format!(
                "strategy `{name}` needs dense matrices, but n = {n} exceeds the dense limit {dense_limit}"
            )));
        }
        let refined = args.refined || file.refined;
        let eta_requested = args.eta.or(file.eta);
        if let Some(eta) = eta_requested {
            check_positive("eta", eta)?;
        }
        let mut eta = eta_requested.unwrap_or_else(|| default_eta(n, horizon));
        let mut eta_clamped = false;
        if refined && eta > 1.0 / 6.0 {
            eta = 1.0 / 6.0;
            eta_clamped = true;
        }
        let mc_samples = args.mc_samples.or(file.mc_samples).unwrap_or(DEFAULT_MC_SAMPLES);
        if mc_samples == 0 {
            return Err(CliError::usage("mc-samples must be at least 1"));
        }
        Ok(Self {
            sweep: common.resolve()?,
            n,
            horizon,
            strategy,
            adversary,
            eta_requested,
            eta,
            eta_clamped,
            delta: check_delta(args.delta.or(file.delta).unwrap_or(DEFAULT_DELTA))?,
            k0: check_positive("k0", args.k0.or(file.k0).unwrap_or(DEFAULT_K0))?,
            dense_limit,
            mc_samples,
            refined,
        })
    }

    pub fn core_strategy(&self) -> Strategy {
        match self.strategy {
            StrategyArg::ExactMmw => Strategy::ExactMmw,
            StrategyArg::Rank1 => Strategy::Rank1Exact,
            StrategyArg::Rank1Lanczos => Strategy::Rank1Lanczos,
            StrategyArg::AveragedMc => Strategy::AveragedMc {
                samples: self.mc_samples,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdpConfig {
    #[serde(flatten)]
    pub sweep: Sweep,
    pub instance: String,
    pub epsilon: f64,
    pub delta: f64,
    pub lanczos: bool,
    pub k0: f64,
    pub dense_limit: usize,
}

impl SdpConfig {
    pub fn resolve(args: SdpArgs) -> CliResult<Self> {
        let file = load_file(args.common.config.as_deref())?.sdp_feas.unwrap_or_default();
        let common = args.common.overlay(file.common);
        let epsilon = args.epsilon.or(file.epsilon).unwrap_or(0.25);
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(CliError::usage(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        Ok(Self {
            sweep: common.resolve()?,
            instance: args
                .instance
                .or(file.instance)
                .unwrap_or_else(|| "builtin:random20".to_string()),
            epsilon,
            delta: check_delta(args.delta.or(file.delta).unwrap_or(DEFAULT_DELTA))?,
            lanczos: args.lanczos || file.lanczos,
            k0: check_positive("k0", args.k0.or(file.k0).unwrap_or(DEFAULT_K0))?,
            dense_limit: args.dense_limit.or(file.dense_limit).unwrap_or(DEFAULT_DENSE_LIMIT),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    /// Diagonal matrix with eigenvalues uniform in `[-norm, norm]`.
    Diagonal,
    /// Random sparse symmetric matrix rescaled to the requested norm.
    Sparse,
}

impl SpectrumKind {
    pub fn name(self) -> &'static str {
        match self {
            SpectrumKind::Diagonal => "diagonal",
            SpectrumKind::Sparse => "sparse",
        }
    }

    fn parse(s: &str) -> CliResult<Self> {
        match s {
            "diagonal" => Ok(SpectrumKind::Diagonal),
            "sparse" => Ok(SpectrumKind::Sparse),
            other => Err(CliError::usage(format!("unknown spectrum kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchConfig {
    #[serde(flatten)]
    pub sweep: Sweep,
    pub sizes: Vec<usize>,
    pub ks: Option<Vec<usize>>,
    pub spectra: Vec<SpectrumKind>,
    pub norm: f64,
}

impl BenchConfig {
    pub fn resolve(args: BenchArgs) -> CliResult<Self> {
        let file = load_file(args.common.config.as_deref())?.bench_lanczos.unwrap_or_default();
        let mut common = args.common.overlay(file.common);
        common.seeds = common.seeds.or(Some(3));
        let sizes = args.sizes.or(file.sizes).unwrap_or_else(|| vec![16, 64, 256]);
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(CliError::usage("sizes must be positive"));
        }
        let ks = args.ks.or(file.ks);
        if ks.as_ref().is_some_and(|ks| ks.contains(&0)) {
            return Err(CliError::usage("iteration counts must be positive"));
        }
        let spectra = args
            .spectra
            .or(file.spectra)
            .unwrap_or_else(|| vec!["diagonal".into(), "sparse".into()])
            .iter()
            .map(|s| SpectrumKind::parse(s))
            .collect::<CliResult<_>>()?;
        Ok(Self {
            sweep: common.resolve()?,
            sizes,
            ks,
            spectra,
            norm: check_positive("norm", args.norm.or(file.norm).unwrap_or(8.0))?,
        })
    }

    /// Iteration counts for size `n`.
    pub fn ks_for(&self, n: usize) -> Vec<usize> {
        match &self.ks {
            Some(ks) => ks.iter().map(|k| (*k).min(n)).collect(),
            None => {
                let mut ks: Vec<usize> = (0..).map(|p| 1usize << p).take_while(|k| *k < n).collect();
                ks.push(n);
                ks
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestConfig {
    pub seed: u64,
    pub samples: usize,
}

impl SelftestConfig {
    pub fn resolve(args: SelftestArgs) -> CliResult<Self> {
        let file = load_file(args.config.as_deref())?.selftest.unwrap_or_default();
        let samples = args.samples.or(file.samples).unwrap_or(10_000);
        if samples < 2 {
            return Err(CliError::usage("samples must be at least 2"));
        }
        Ok(Self {
            seed: args.seed.or(file.seed).unwrap_or(0),
            samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Command {
        Cli::try_parse_from(std::iter::once("mmw-sketch").chain(args.iter().copied()))
            .unwrap()
            .command
    }

    #[test]
    fn defaults_are_documented_values() {
        let Command::OnlineEig(a) = parse(&["online-eig"]) else { panic!() };
        let c = OnlineConfig::resolve(a).unwrap();
        assert_eq!((c.delta, c.k0, c.dense_limit, c.mc_samples), (0.1, 4.0, 2048, 100_000));
        assert_eq!(c.eta, default_eta(32, 1000));
        assert_eq!(c.sweep.seed_list(), vec![0]);
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[online-eig]\nn = 12\nT = 40\nseeds = 3\nstrategy = \"exact-mmw\"\n").unwrap();
        let Command::OnlineEig(a) =
            parse(&["online-eig", "--config", path.to_str().unwrap(), "--T", "99"])
        else {
            panic!()
        };
        let c = OnlineConfig::resolve(a).unwrap();
        assert_eq!((c.n, c.horizon, c.sweep.seeds), (12, 99, 3));
        assert_eq!(c.strategy, StrategyArg::ExactMmw);

        fs::write(&path, "[online-eig]\nbogus = 1\n").unwrap();
        let Command::OnlineEig(a) = parse(&["online-eig", "--config", path.to_str().unwrap()]) else {
            panic!()
        };
        assert!(matches!(OnlineConfig::resolve(a), Err(CliError::Usage(_))));
    }

    #[test]
    fn rejects_dense_strategies_above_the_limit() {
        let Command::OnlineEig(a) =
            parse(&["online-eig", "--n", "100", "--dense-limit", "50", "--strategy", "exact-mmw"])
        else {
            panic!()
        };
        let err = OnlineConfig::resolve(a).unwrap_err();
        assert!(err.to_string().contains("dense limit"));
        assert_eq!(err.exit_code(), crate::error::EXIT_USAGE);
    }

    #[test]
    fn refined_runs_clamp_eta() {
        let Command::OnlineEig(a) = parse(&["online-eig", "--refined", "--eta", "0.5"]) else {
            panic!()
        };
        let c = OnlineConfig::resolve(a).unwrap();
        assert_eq!(c.eta, 1.0 / 6.0);
        assert!(c.eta_clamped);
    }

    #[test]
    fn bench_iteration_defaults() {
        let Command::BenchLanczos(a) = parse(&["bench-lanczos", "--sizes", "10,4"]) else { panic!() };
        let c = BenchConfig::resolve(a).unwrap();
        assert_eq!(c.ks_for(10), vec![1, 2, 4, 8, 10]);
        assert_eq!(c.ks_for(4), vec![1, 2, 4]);
        assert_eq!(c.sweep.seeds, 3);
    }
}
