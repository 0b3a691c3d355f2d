//! Kernels on discretized curves and the pooled Gram matrix split into
//! group blocks.

use nalgebra::{DMatrix, DMatrixView};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fda::{l2_sq_dist, l2_sq_dist_unchecked, FunctionalSample, Grid};

pub const DEFAULT_GAMMA: f64 = 0.5;

/// Kernel families. Only bounded families are offered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    /// `exp(-gamma * ||x - y||²)`
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub gamma: f64,
}

impl KernelSpec {
    pub fn gaussian(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid(format!(
                "kernel gamma must be a positive finite number, got {gamma}"
            )));
        }
        Ok(KernelSpec {
            family: KernelFamily::Gaussian,
            gamma,
        })
    }

    #[inline]
    fn of_sq_dist(&self, d2: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (-self.gamma * d2).exp(),
        }
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            family: KernelFamily::Gaussian,
            gamma: DEFAULT_GAMMA,
        }
    }
}

pub fn eval_kernel(spec: &KernelSpec, x: &[f64], y: &[f64], grid: &Grid) -> Result<f64> {
    Ok(spec.of_sq_dist(l2_sq_dist(x, y, grid)?))
}

/// Pooled Gram matrix with its group partition.
///
/// Rows and columns are ordered group by group; block `(j, l)` holds
/// `K(X_i^(j), X_r^(l))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramBlocks {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    full: DMatrix<f64>,
}

impl GramBlocks {
    /// Wraps a precomputed pooled kernel matrix. The matrix must be exactly
    /// symmetric and its side must equal the sum of `sizes`.
    pub fn from_matrix(sizes: Vec<usize>, full: DMatrix<f64>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::invalid(format!(
                "at least 2 groups are required, got {}",
                sizes.len()
            )));
        }
        if let Some(j) = sizes.iter().position(|&s| s < 2) {
            return Err(Error::invalid(format!(
                "group {} has fewer than 2 observations",
                j + 1
            )));
        }
        let n: usize = sizes.iter().sum();
        if full.nrows() != n || full.ncols() != n {
            return Err(Error::invalid(format!(
                "Gram matrix is {}x{} but group sizes sum to {n}",
                full.nrows(),
                full.ncols()
            )));
        }
        if full.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("Gram matrix has non-finite entries"));
        }
        for i in 0..n {
            for r in (i + 1)..n {
                if full[(i, r)] != full[(r, i)] {
                    return Err(Error::invalid(format!(
                        "Gram matrix is not symmetric at ({i}, {r})"
                    )));
                }
            }
        }
        Ok(Self::from_parts(sizes, full))
    }

    fn from_parts(sizes: Vec<usize>, full: DMatrix<f64>) -> Self {
        let offsets = sizes
            .iter()
            .scan(0, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        GramBlocks {
            sizes,
            offsets,
            full,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn n_total(&self) -> usize {
        self.full.nrows()
    }

    pub fn full(&self) -> &DMatrix<f64> {
        &self.full
    }

    /// Row/column offset of group `j` in the pooled ordering.
    pub fn offset(&self, j: usize) -> usize {
        self.offsets[j]
    }

    pub fn block(&self, j: usize, l: usize) -> DMatrixView<'_, f64> {
        self.full.view(
            (self.offsets[j], self.offsets[l]),
            (self.sizes[j], self.sizes[l]),
        )
    }

    /// Gram matrix of the relabeled pool whose `i`-th observation is the
    /// original observation `perm[i]`. Group sizes are unchanged.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_total();
        if perm.len() != n {
            return Err(Error::invalid(format!(
                "permutation has length {} but the pool has {n} observations",
                perm.len()
            )));
        }
        let mut seen = vec![false; n];
        for &p in perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::invalid("not a permutation of the pooled indices"));
            }
        }
        Ok(self.permuted_unchecked(perm))
    }

    pub(crate) fn permuted_unchecked(&self, perm: &[usize]) -> Self {
        let n = self.n_total();
        let src = &self.full;
        let full = DMatrix::from_fn(n, n, |i, r| src[(perm[i], perm[r])]);
        Self::from_parts(self.sizes.clone(), full)
    }
}

/// Evaluates the kernel on every pair of pooled curves. Only the upper
/// triangle is computed; the lower triangle is mirrored from it.
pub fn build_gram(samples: &[FunctionalSample], spec: &KernelSpec) -> Result<GramBlocks> {
    if samples.len() < 2 {
        return Err(Error::invalid(format!(
            "at least 2 groups are required, got {}",
            samples.len()
        )));
    }
    let grid = samples[0].grid();
    if let Some(j) = samples.iter().position(|s| s.grid() != grid) {
        return Err(Error::invalid(format!(
            "group {} is observed on a different grid than group 1",
            j + 1
        )));
    }
    let sizes: Vec<usize> = samples.iter().map(FunctionalSample::len).collect();
    let pooled: Vec<&[f64]> = samples.iter().flat_map(|s| s.curves()).collect();
    let n = pooled.len();
    let weights = grid.weights();

    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i..n)
                .map(|r| spec.of_sq_dist(l2_sq_dist_unchecked(pooled[i], pooled[r], weights)))
                .collect()
        })
        .collect();

    let mut full = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let r = i + off;
            full[(i, r)] = v;
            full[(r, i)] = v;
        }
    }
    Ok(GramBlocks::from_parts(sizes, full))
}

/// Group weights `pi`, positive and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct GroupWeights(Vec<f64>);

impl GroupWeights {
    /// `pi_j = n_j / n`.
    pub fn proportional(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::invalid("group sizes must be positive"));
        }
        let n: usize = sizes.iter().sum();
        Ok(GroupWeights(
            sizes.iter().map(|&s| s as f64 / n as f64).collect(),
        ))
    }

    /// Arbitrary weights in (0, 1) summing to one within `1e-9`.
    pub fn explicit(pi: Vec<f64>) -> Result<Self> {
        if pi.len() < 2 {
            return Err(Error::invalid("at least 2 weights are required"));
        }
        if pi.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::invalid("weights must lie strictly between 0 and 1"));
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "weights must sum to 1, got {total}"
            )));
        }
        Ok(GroupWeights(pi))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when these are the proportional weights of `sizes`.
    pub fn is_proportional_to(&self, sizes: &[usize]) -> bool {
        let n: usize = sizes.iter().sum();
        self.0.len() == sizes.len()
            && self
                .0
                .iter()
                .zip(sizes)
                .all(|(p, &s)| (p - s as f64 / n as f64).abs() <= 1e-12)
    }
}

impl TryFrom<Vec<f64>> for GroupWeights {
    type Error = Error;

    fn try_from(pi: Vec<f64>) -> Result<Self> {
        GroupWeights::explicit(pi)
    }
}

impl From<GroupWeights> for Vec<f64> {
    fn from(w: GroupWeights) -> Self {
        w.0
    }
}
