//! Permutation calibration of Gram-based statistics.
//!
//! Replicates relabel the pooled sample by permuting rows and columns of the
//! precomputed Gram matrix, so no kernel is re-evaluated.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{GramBlocks, GroupWeights};
use crate::statistic::{mmvd_statistic, StatisticKind, TestStatistic};
use crate::streams::stream_rng;

pub const DEFAULT_SIMULATION_PERMUTATIONS: usize = 199;
pub const DEFAULT_CLI_PERMUTATIONS: usize = 999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationPlan {
    pub n_permutations: usize,
    pub master_seed: u64,
    pub statistic: StatisticKind,
}

impl PermutationPlan {
    pub fn new(n_permutations: usize, master_seed: u64, statistic: StatisticKind) -> Result<Self> {
        if n_permutations < 1 {
            return Err(Error::invalid("at least one permutation is required"));
        }
        Ok(PermutationPlan {
            n_permutations,
            master_seed,
            statistic,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Observed value of the planned statistic.
    pub observed: f64,
    /// MMVD decomposition of the observed sample (also reported for GMMD plans).
    pub decomposition: TestStatistic,
    pub p_value: f64,
    pub replicate_values: Vec<f64>,
    pub plan: PermutationPlan,
    pub sizes: Vec<usize>,
}

impl TestResult {
    pub fn reject(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }
}

/// Add-one permutation p-value `(1 + #{replicate >= observed}) / (B + 1)`.
pub fn permutation_p_value(observed: f64, replicates: &[f64]) -> f64 {
    let exceed = replicates.iter().filter(|&&v| v >= observed).count();
    (1 + exceed) as f64 / (replicates.len() + 1) as f64
}

/// The pooled-index permutation used by replicate `b`.
pub fn replicate_permutation(master_seed: u64, b: u64, n: usize) -> Vec<usize> {
    let mut rng = stream_rng(master_seed, b);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    perm
}

/// Replicate values of several statistics sharing the same permutations.
/// `out[s][b]` is statistic `kinds[s]` under replicate `b`.
pub fn permutation_replicates(
    gram: &GramBlocks,
    weights: &GroupWeights,
    n_permutations: usize,
    master_seed: u64,
    kinds: &[StatisticKind],
) -> Result<Vec<Vec<f64>>> {
    if n_permutations < 1 {
        return Err(Error::invalid("at least one permutation is required"));
    }
    let n = gram.n_total();
    let per_replicate: Vec<Vec<f64>> = (0..n_permutations as u64)
        .into_par_iter()
        .map(|b| {
            let perm = replicate_permutation(master_seed, b, n);
            let shuffled = gram.permuted_unchecked(&perm);
            kinds
                .iter()
                .map(|kind| kind.evaluate(&shuffled, weights))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok((0..kinds.len())
        .map(|s| per_replicate.iter().map(|row| row[s]).collect())
        .collect())
}

pub fn permutation_test(
    gram: &GramBlocks,
    weights: &GroupWeights,
    plan: &PermutationPlan,
) -> Result<TestResult> {
    if plan.n_permutations < 1 {
        return Err(Error::invalid("at least one permutation is required"));
    }
    let decomposition = mmvd_statistic(gram, weights)?;
    let observed = match plan.statistic {
        StatisticKind::Mmvd => decomposition.value,
        kind => kind.evaluate(gram, weights)?,
    };
    let replicate_values = permutation_replicates(
        gram,
        weights,
        plan.n_permutations,
        plan.master_seed,
        &[plan.statistic],
    )?
    .remove(0);
    Ok(TestResult {
        observed,
        decomposition,
        p_value: permutation_p_value(observed, &replicate_values),
        replicate_values,
        plan: *plan,
        sizes: gram.sizes().to_vec(),
    })
}
