//! Command-line front end: `test`, `simulate` and `nulldist`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{matrix_to_csv, read_groups, write_sample};
use crate::kernels::{build_gram, GroupWeights, KernelSpec, DEFAULT_GAMMA};
use crate::nulldist::{critical_value, estimate_spectrum, quantile, sample_null, DEFAULT_NULL_DRAWS};
use crate::permtest::{
    permutation_p_value, permutation_test, PermutationPlan, DEFAULT_CLI_PERMUTATIONS,
    DEFAULT_SIMULATION_PERMUTATIONS,
};
use crate::simgen::{monte_carlo, replication_data, table_csv, ExpParam, Method, Model, ModelSpec, NoiseStructure, MonteCarloConfig};
use crate::statistic::{mmvd_statistic, StatisticKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mmvd", version, about = "Kernel homogeneity tests for k groups of functional data")]
pub struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true, env = "MMVD_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Permutation test on one CSV file per group.
    Test(TestArgs),
    /// Monte Carlo size/power study on the synthetic models.
    Simulate(SimulateArgs),
    /// Estimated asymptotic null law and spectral calibration.
    Nulldist(NulldistArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatisticArg {
    Mmvd,
    Gmmd,
}

impl From<StatisticArg> for StatisticKind {
    fn from(s: StatisticArg) -> Self {
        match s {
            StatisticArg::Mmvd => StatisticKind::Mmvd,
            StatisticArg::Gmmd => StatisticKind::Gmmd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Mmvd,
    Gmmd,
    Spectral,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mmvd => Method::Mmvd,
            MethodArg::Gmmd => Method::Gmmd,
            MethodArg::Spectral => Method::MmvdSpectral,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExpParamArg {
    Mean,
    Rate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseArg {
    Path,
    White,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// One CSV file per group (at least two).
    #[arg(required = true, num_args = 2..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub kernel_gamma: f64,
    /// `proportional` or a comma-separated list of weights summing to 1.
    #[arg(long, default_value = "proportional")]
    pub weights: String,
    #[arg(long, default_value_t = DEFAULT_CLI_PERMUTATIONS)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = StatisticArg::Mmvd)]
    pub statistic: StatisticArg,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the pooled Gram matrix as CSV.
    #[arg(long)]
    pub dump_gram: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model 1 (null), 2 or 3.
    #[arg(long)]
    pub model: u8,
    /// Per-group sample size; a comma-separated list runs one study per size.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub replications: usize,
    #[arg(long, default_value_t = DEFAULT_SIMULATION_PERMUTATIONS)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub kernel_gamma: f64,
    #[arg(long, value_enum, default_value_t = ExpParamArg::Mean)]
    pub exp_param: ExpParamArg,
    /// Noise across grid points: `path` (processes) or `white` (independent).
    #[arg(long, value_enum, default_value_t = NoiseArg::Path)]
    pub noise: NoiseArg,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mmvd,gmmd")]
    pub methods: Vec<MethodArg>,
    /// Draws from the null law per replication for the spectral method.
    #[arg(long, default_value_t = DEFAULT_NULL_DRAWS)]
    pub null_draws: usize,
    /// Write the data of replication 0 (first size) as group_<j>.csv into this directory.
    #[arg(long)]
    pub emit_data: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NulldistArgs {
    #[arg(required = true, num_args = 2..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub kernel_gamma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0.90,0.95,0.99")]
    pub quantiles: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_NULL_DRAWS)]
    pub draws: usize,
    /// `json` writes the full report; `csv` writes one eigenvalue per line.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// JSON report of the `test` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: StatisticKind,
    pub statistic: f64,
    pub pair_mvd_sq: Vec<Vec<f64>>,
    pub hs_norms: Vec<f64>,
    pub weights: GroupWeights,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    #[serde(rename = "B")]
    pub permutations: usize,
    pub seed: u64,
    pub n_sizes: Vec<usize>,
    pub gamma: f64,
    pub replicate_values: Vec<f64>,
}

impl TestReport {
    /// Re-checks the invariants a report must satisfy.
    pub fn validate(&self) -> Result<()> {
        let k = self.n_sizes.len();
        let fail = |m: &str| Err(Error::invalid(format!("invalid test report: {m}")));
        if k < 2 || self.n_sizes.iter().any(|&n| n < 2) {
            return fail("group sizes");
        }
        if self.weights.len() != k || self.hs_norms.len() != k || self.pair_mvd_sq.len() != k {
            return fail("group count mismatch");
        }
        for j in 0..k {
            if self.pair_mvd_sq[j].len() != k || self.pair_mvd_sq[j][j] != 0.0 {
                return fail("pair matrix shape or diagonal");
            }
            for l in 0..k {
                if self.pair_mvd_sq[j][l] != self.pair_mvd_sq[l][j] || self.pair_mvd_sq[j][l] < 0.0 {
                    return fail("pair matrix symmetry or sign");
                }
            }
        }
        if self.statistic.is_nan() || self.statistic < 0.0 {
            return fail("negative statistic");
        }
        if self.method == StatisticKind::Mmvd {
            let pi = self.weights.as_slice();
            let total: f64 = (0..k)
                .flat_map(|j| (0..k).filter(move |&l| l != j).map(move |l| (j, l)))
                .map(|(j, l)| pi[l] * self.pair_mvd_sq[j][l])
                .sum();
            if (total - self.statistic).abs() > 1e-10 * total.abs().max(1e-300) {
                return fail("statistic disagrees with its pair decomposition");
            }
        }
        if self.replicate_values.len() != self.permutations || self.permutations == 0 {
            return fail("replicate count");
        }
        let b = self.permutations as f64;
        if self.p_value < 1.0 / (b + 1.0) || self.p_value > 1.0 {
            return fail("p-value range");
        }
        if permutation_p_value(self.statistic, &self.replicate_values) != self.p_value {
            return fail("p-value does not match the replicates");
        }
        if self.reject != (self.p_value <= self.alpha) {
            return fail("decision does not match p-value and alpha");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEntry {
    pub level: f64,
    pub value: f64,
}

/// JSON report of the `nulldist` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NulldistReport {
    pub eigenvalues: Vec<f64>,
    pub truncation: usize,
    pub rho: Vec<f64>,
    pub quantiles: Vec<QuantileEntry>,
    pub statistic: f64,
    /// `n · T`, the quantity compared with the critical value.
    pub scaled_statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub draws: usize,
    pub seed: u64,
    pub n_sizes: Vec<usize>,
    pub gamma: f64,
}

fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content)?,
        None => std::io::stdout().write_all(content.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn parse_weights(spec: &str, sizes: &[usize]) -> Result<GroupWeights> {
    if spec.trim() == "proportional" {
        return GroupWeights::proportional(sizes);
    }
    let pi = spec
        .split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("cannot parse weight {f:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if pi.len() != sizes.len() {
        return Err(Error::invalid(format!(
            "{} weights given for {} groups",
            pi.len(),
            sizes.len()
        )));
    }
    let w = GroupWeights::explicit(pi)?;
    if !w.is_proportional_to(sizes) {
        eprintln!(
            "warning: weights differ from the group proportions; the asymptotic null law assumes proportional weights"
        );
    }
    Ok(w)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")))
    }
}

pub fn cmd_test(args: &TestArgs) -> Result<TestReport> {
    check_alpha(args.alpha)?;
    let kernel = KernelSpec::gaussian(args.kernel_gamma)?;
    let samples = read_groups(&args.inputs)?;
    let gram = build_gram(&samples, &kernel)?;
    if let Some(path) = &args.dump_gram {
        fs::write(path, matrix_to_csv(gram.full()))?;
    }
    let weights = parse_weights(&args.weights, gram.sizes())?;
    let plan = PermutationPlan::new(args.permutations, args.seed, args.statistic.into())?;
    let result = permutation_test(&gram, &weights, &plan)?;
    let report = TestReport {
        method: plan.statistic,
        statistic: result.observed,
        pair_mvd_sq: result.decomposition.pair_mvd_sq.clone(),
        hs_norms: result.decomposition.hs_norms.clone(),
        weights,
        p_value: result.p_value,
        alpha: args.alpha,
        reject: result.reject(args.alpha),
        permutations: plan.n_permutations,
        seed: plan.master_seed,
        n_sizes: result.sizes.clone(),
        gamma: kernel.gamma,
        replicate_values: result.replicate_values,
    };
    report.validate().map_err(|e| Error::Consistency(e.to_string()))?;

    let content = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let sizes: Vec<String> = report.n_sizes.iter().map(ToString::to_string).collect();
            format!(
                "key,value\nmethod,{}\nstatistic,{}\np_value,{}\nalpha,{}\nreject,{}\nB,{}\nseed,{}\nn_sizes,{}\ngamma,{}\n",
                report.method.name(),
                report.statistic,
                report.p_value,
                report.alpha,
                report.reject,
                report.permutations,
                report.seed,
                sizes.join(";"),
                report.gamma
            )
        }
    };
    emit(args.out.as_deref(), &content)?;
    Ok(report)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Vec<crate::simgen::MonteCarloReport>> {
    let model = Model::from_id(args.model)?;
    check_alpha(args.alpha)?;
    let config = MonteCarloConfig {
        replications: args.replications,
        permutations: args.permutations,
        alpha: args.alpha,
        kernel: KernelSpec::gaussian(args.kernel_gamma)?,
        methods: args.methods.iter().map(|&m| m.into()).collect(),
        null_draws: args.null_draws,
    };
    let exp_param = match args.exp_param {
        ExpParamArg::Mean => ExpParam::Mean,
        ExpParamArg::Rate => ExpParam::Rate,
    };
    let specs = args
        .n
        .iter()
        .map(|&n| {
            Ok(ModelSpec {
                exp_param,
                noise: match args.noise {
                    NoiseArg::Path => NoiseStructure::Path,
                    NoiseArg::White => NoiseStructure::White,
                },
                ..ModelSpec::balanced(model, n, args.seed)?
            })
        })
        .collect::<Result<Vec<_>>>()?;

    if let Some(dir) = &args.emit_data {
        fs::create_dir_all(dir)?;
        for (j, sample) in replication_data(&specs[0], 0)?.iter().enumerate() {
            write_sample(&dir.join(format!("group_{}.csv", j + 1)), sample)?;
        }
    }

    let mut reports = Vec::with_capacity(specs.len());
    for spec in &specs {
        let report = monte_carlo(spec, &config)?;
        eprintln!(
            "model {} n={}: {} replications in {:.2?}",
            model.id(),
            spec.group_sizes[0],
            report.replications,
            report.wall_time
        );
        reports.push(report);
    }
    let content = match args.format {
        Format::Json => to_json(&reports),
        Format::Csv => table_csv(&reports),
    };
    emit(args.out.as_deref(), &content)?;
    Ok(reports)
}

pub fn cmd_nulldist(args: &NulldistArgs) -> Result<NulldistReport> {
    check_alpha(args.alpha)?;
    for &q in &args.quantiles {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::invalid(format!("quantile level {q} outside (0, 1)")));
        }
    }
    let kernel = KernelSpec::gaussian(args.kernel_gamma)?;
    let samples = read_groups(&args.inputs)?;
    let gram = build_gram(&samples, &kernel)?;
    let weights = GroupWeights::proportional(gram.sizes())?;
    let stat = mmvd_statistic(&gram, &weights)?;
    let spectrum = estimate_spectrum(&gram)?;
    let truncation = spectrum.default_truncation();
    let sample = sample_null(&spectrum.truncated(truncation), gram.n_groups(), args.draws, args.seed)?;
    let critical = critical_value(&sample, args.alpha)?;
    let quantiles = args
        .quantiles
        .iter()
        .map(|&level| Ok(QuantileEntry { level, value: quantile(&sample, level)? }))
        .collect::<Result<Vec<_>>>()?;
    let scaled = gram.n_total() as f64 * stat.value;
    let report = NulldistReport {
        eigenvalues: spectrum.eigenvalues.clone(),
        truncation,
        rho: spectrum.rho.clone(),
        quantiles,
        statistic: stat.value,
        scaled_statistic: scaled,
        critical_value: critical,
        alpha: args.alpha,
        reject: scaled > critical,
        draws: args.draws,
        seed: args.seed,
        n_sizes: gram.sizes().to_vec(),
        gamma: kernel.gamma,
    };
    let content = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => report.eigenvalues.iter().map(|v| format!("{v}\n")).collect(),
    };
    emit(args.out.as_deref(), &content)?;
    Ok(report)
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Test(a) => cmd_test(a).map(drop),
        Command::Simulate(a) => cmd_simulate(a).map(drop),
        Command::Nulldist(a) => cmd_nulldist(a).map(drop),
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Consistency(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.threads {
        Some(0) => Err(Error::invalid("--threads must be at least 1")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start thread pool: {e}")))
            .and_then(|pool| pool.install(|| dispatch(&cli))),
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
