//! Synthetic three-group functional data and the Monte Carlo size/power
//! harness.
//!
//! Noise marginals: `ε(t) ~ N(0, t)` (variance t), `ν₁(t) ~ Exp` with mean t
//! (or rate t), `ν₂(t) ~ Poisson(t)`. By default these are realized as
//! processes along each curve (see [`NoiseStructure`]); white noise on the
//! grid is available as well. Every noise is identically 0 at t = 0 and
//! independent across curves.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fda::{FunctionalSample, Grid};
use crate::kernels::{build_gram, GroupWeights, KernelSpec};
use crate::nulldist::{spectral_test, DEFAULT_NULL_DRAWS};
use crate::permtest::{permutation_p_value, permutation_replicates, DEFAULT_SIMULATION_PERMUTATIONS};
use crate::statistic::StatisticKind;
use crate::streams::{derive_seed, stream_rng};

pub const GRID_POINTS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    Model1,
    Model2,
    Model3,
}

impl Model {
    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Model::Model1),
            2 => Ok(Model::Model2),
            3 => Ok(Model::Model3),
            _ => Err(Error::invalid(format!("unknown model {id} (expected 1, 2 or 3)"))),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Model::Model1 => 1,
            Model::Model2 => 2,
            Model::Model3 => 3,
        }
    }

    /// Mean function and noise law of group `j` (0-based).
    fn group(self, j: usize) -> (fn(f64) -> f64, Noise) {
        fn m1(t: f64) -> f64 {
            t * (1.0 - t)
        }
        fn m2a(t: f64) -> f64 {
            t * (1.0 - t).powi(5)
        }
        fn m2b(t: f64) -> f64 {
            t.powi(2) * (1.0 - t).powi(4)
        }
        fn m2c(t: f64) -> f64 {
            t.powi(3) * (1.0 - t).powi(3)
        }
        fn m3(t: f64) -> f64 {
            t * (1.0 - t).powi(3)
        }
        fn m3_shifted(t: f64) -> f64 {
            t * (1.0 - t).powi(3) - t
        }
        match (self, j) {
            (Model::Model1, _) => (m1, Noise::Gaussian),
            (Model::Model2, 0) => (m2a, Noise::Gaussian),
            (Model::Model2, 1) => (m2b, Noise::Gaussian),
            (Model::Model2, _) => (m2c, Noise::Exponential),
            (Model::Model3, 1) => (m3_shifted, Noise::Poisson),
            (Model::Model3, _) => (m3, Noise::Gaussian),
        }
    }
}

/// How `Exp(t)` is parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExpParam {
    #[default]
    Mean,
    Rate,
}

/// Dependence of the noise across grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseStructure {
    /// Independent draws at every grid point.
    White,
    /// Processes with the stated marginals: Brownian motion for `ε`, a
    /// Poisson process for `ν₂` and `t·E` (one `E ~ Exp(1)` per curve) for `ν₁`.
    #[default]
    Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Noise {
    Gaussian,
    Exponential,
    Poisson,
}

impl Noise {
    fn exp_scale(t: f64, exp_param: ExpParam) -> f64 {
        match exp_param {
            ExpParam::Mean => t,
            ExpParam::Rate => 1.0 / t,
        }
    }

    /// Independent draw with the marginal law at `t`.
    fn sample<R: Rng + ?Sized>(self, t: f64, exp_param: ExpParam, rng: &mut R) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            Noise::Gaussian => t.sqrt() * rng.sample::<f64, _>(StandardNormal),
            Noise::Exponential => Self::exp_scale(t, exp_param) * rng.sample::<f64, _>(Exp1),
            Noise::Poisson => Poisson::new(t).expect("positive Poisson mean").sample(rng),
        }
    }

    /// One path on `points`, written into `out`.
    fn path<R: Rng + ?Sized>(self, points: &[f64], exp_param: ExpParam, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            Noise::Exponential => {
                let e: f64 = rng.sample(Exp1);
                out.extend(points.iter().map(|&t| {
                    if t <= 0.0 {
                        0.0
                    } else {
                        Self::exp_scale(t, exp_param) * e
                    }
                }));
            }
            Noise::Gaussian | Noise::Poisson => {
                let mut level = 0.0;
                let mut prev = 0.0;
                for &t in points {
                    // independent increments over (prev, t]
                    level += self.sample(t - prev, exp_param, rng);
                    prev = t;
                    out.push(level);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: Model,
    pub group_sizes: [usize; 3],
    pub grid: Grid,
    pub seed: u64,
    #[serde(default)]
    pub exp_param: ExpParam,
    #[serde(default)]
    pub noise: NoiseStructure,
}

impl ModelSpec {
    /// Equal group sizes on the 21-point equispaced grid.
    pub fn balanced(model: Model, n: usize, seed: u64) -> Result<Self> {
        let spec = ModelSpec {
            model,
            group_sizes: [n; 3],
            grid: Grid::equispaced(GRID_POINTS)?,
            seed,
            exp_param: ExpParam::Mean,
            noise: NoiseStructure::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(j) = self.group_sizes.iter().position(|&n| n < 2) {
            return Err(Error::invalid(format!(
                "group {} needs at least 2 curves",
                j + 1
            )));
        }
        Ok(())
    }
}

pub fn generate(spec: &ModelSpec) -> Result<Vec<FunctionalSample>> {
    spec.validate()?;
    let points = spec.grid.points();
    spec.group_sizes
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let (mean, noise) = spec.model.group(j);
            let mut rng = stream_rng(spec.seed, j as u64);
            let mut data = Vec::with_capacity(n * points.len());
            for _ in 0..n {
                let start = data.len();
                match spec.noise {
                    NoiseStructure::White => {
                        data.extend(points.iter().map(|&t| noise.sample(t, spec.exp_param, &mut rng)))
                    }
                    NoiseStructure::Path => noise.path(points, spec.exp_param, &mut rng, &mut data),
                }
                for (v, &t) in data[start..].iter_mut().zip(points) {
                    *v += mean(t);
                }
            }
            FunctionalSample::from_flat(spec.grid.clone(), data)
        })
        .collect()
}

/// Calibration methods the harness can run side by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    /// MMVD with permutation p-values.
    #[serde(rename = "MMVD")]
    Mmvd,
    /// GMMD baseline with permutation p-values.
    #[serde(rename = "GMMD")]
    Gmmd,
    /// MMVD against the estimated asymptotic null law.
    #[serde(rename = "MMVD_SPECTRAL")]
    MmvdSpectral,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mmvd => "MMVD",
            Method::Gmmd => "GMMD",
            Method::MmvdSpectral => "MMVD_SPECTRAL",
        }
    }

    fn permutation_kind(self) -> Option<StatisticKind> {
        match self {
            Method::Mmvd => Some(StatisticKind::Mmvd),
            Method::Gmmd => Some(StatisticKind::Gmmd),
            Method::MmvdSpectral => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub replications: usize,
    pub permutations: usize,
    pub alpha: f64,
    pub kernel: KernelSpec,
    pub methods: Vec<Method>,
    pub null_draws: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            replications: 200,
            permutations: DEFAULT_SIMULATION_PERMUTATIONS,
            alpha: 0.05,
            kernel: KernelSpec::default(),
            methods: vec![Method::Mmvd, Method::Gmmd],
            null_draws: DEFAULT_NULL_DRAWS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub model: ModelSpec,
    pub replications: usize,
    pub alpha: f64,
    pub permutations: usize,
    pub gamma: f64,
    /// Rejection rate of the MMVD permutation test (or of the first method
    /// when MMVD was not run).
    pub rejection_rate: f64,
    pub per_method: BTreeMap<Method, f64>,
    pub rejections: BTreeMap<Method, usize>,
    /// Not serialized, so that reports are byte-reproducible.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl MonteCarloReport {
    pub fn primary_method(&self) -> Option<Method> {
        if self.rejections.contains_key(&Method::Mmvd) {
            Some(Method::Mmvd)
        } else {
            self.rejections.keys().next().copied()
        }
    }

    /// Checks the internal bookkeeping of a (possibly deserialized) report.
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::invalid("report has zero replications"));
        }
        for (method, &count) in &self.rejections {
            let rate = self.per_method.get(method).copied();
            if count > self.replications || rate != Some(count as f64 / self.replications as f64) {
                return Err(Error::invalid(format!(
                    "rejection rate of {} is inconsistent with its count",
                    method.name()
                )));
            }
        }
        if self.per_method.len() != self.rejections.len() {
            return Err(Error::invalid("per-method rates and counts disagree"));
        }
        let primary = self
            .primary_method()
            .ok_or_else(|| Error::invalid("report has no methods"))?;
        if self.per_method[&primary] != self.rejection_rate {
            return Err(Error::invalid("headline rejection rate does not match its method"));
        }
        Ok(())
    }
}

/// Data of replication `r`, exactly as [`monte_carlo`] sees it.
pub fn replication_data(spec: &ModelSpec, r: u64) -> Result<Vec<FunctionalSample>> {
    let data_spec = ModelSpec {
        seed: derive_seed(derive_seed(spec.seed, r), 0),
        ..spec.clone()
    };
    generate(&data_spec)
}

fn run_replication(spec: &ModelSpec, config: &MonteCarloConfig, r: u64) -> Result<Vec<bool>> {
    let rep_seed = derive_seed(spec.seed, r);
    let samples = replication_data(spec, r)?;
    let gram = build_gram(&samples, &config.kernel)?;
    let weights = GroupWeights::proportional(gram.sizes())?;

    let kinds: Vec<StatisticKind> = config
        .methods
        .iter()
        .filter_map(|m| m.permutation_kind())
        .collect();
    let replicates = if kinds.is_empty() {
        Vec::new()
    } else {
        permutation_replicates(
            &gram,
            &weights,
            config.permutations,
            derive_seed(rep_seed, 1),
            &kinds,
        )?
    };

    config
        .methods
        .iter()
        .map(|method| match method.permutation_kind() {
            Some(kind) => {
                let slot = kinds.iter().position(|k| *k == kind).expect("kind listed");
                let observed = kind.evaluate(&gram, &weights)?;
                Ok(permutation_p_value(observed, &replicates[slot]) <= config.alpha)
            }
            None => Ok(spectral_test(&gram, config.alpha, config.null_draws, derive_seed(rep_seed, 2))?.reject),
        })
        .collect()
}

/// Empirical rejection rates over independent replications. Replication `r`
/// draws its data and permutations from seeds derived from `(spec.seed, r)`.
pub fn monte_carlo(spec: &ModelSpec, config: &MonteCarloConfig) -> Result<MonteCarloReport> {
    spec.validate()?;
    if config.replications < 1 {
        return Err(Error::invalid("at least one replication is required"));
    }
    if config.methods.is_empty() {
        return Err(Error::invalid("no methods selected"));
    }
    if config.permutations < 1 {
        return Err(Error::invalid("at least one permutation is required"));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {} outside (0, 1)", config.alpha)));
    }
    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();
    let config = MonteCarloConfig {
        methods,
        ..config.clone()
    };

    let start = Instant::now();
    let outcomes: Vec<Vec<bool>> = (0..config.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(spec, &config, r))
        .collect::<Result<_>>()?;

    let mut rejections = BTreeMap::new();
    let mut per_method = BTreeMap::new();
    for (slot, &method) in config.methods.iter().enumerate() {
        let count = outcomes.iter().filter(|o| o[slot]).count();
        rejections.insert(method, count);
        per_method.insert(method, count as f64 / config.replications as f64);
    }
    let mut report = MonteCarloReport {
        model: spec.clone(),
        replications: config.replications,
        alpha: config.alpha,
        permutations: config.permutations,
        gamma: config.kernel.gamma,
        rejection_rate: 0.0,
        per_method,
        rejections,
        wall_time: start.elapsed(),
    };
    let primary = report.primary_method().expect("at least one method");
    report.rejection_rate = report.per_method[&primary];
    Ok(report)
}

/// Rows `model, n, replications, alpha, <method rates...>` shaped like the
/// published size/power table.
pub fn table_csv(reports: &[MonteCarloReport]) -> String {
    let mut methods: Vec<Method> = reports
        .iter()
        .flat_map(|r| r.per_method.keys().copied())
        .collect();
    methods.sort();
    methods.dedup();

    let mut out = String::from("model,n,replications,alpha");
    for m in &methods {
        out.push(',');
        out.push_str(m.name());
    }
    out.push('\n');
    for r in reports {
        let sizes = r.model.group_sizes;
        let n = if sizes.iter().all(|&s| s == sizes[0]) {
            sizes[0].to_string()
        } else {
            format!("{}/{}/{}", sizes[0], sizes[1], sizes[2])
        };
        out.push_str(&format!("{},{},{},{}", r.model.model.id(), n, r.replications, r.alpha));
        for m in &methods {
            out.push(',');
            if let Some(v) = r.per_method.get(m) {
                out.push_str(&format!("{v:.3}"));
            }
        }
        out.push('\n');
    }
    out
}
