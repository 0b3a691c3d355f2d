//! Asymptotic null law of `n·T`: spectral estimation of its weights and a
//! Monte Carlo sampler.
//!
//! Under homogeneity, `n·T` converges to
//!
//! ```text
//! Σ_p λ_p { (k-2) Z_p + Σ_j ( Y_jp² / ρ_j - 2 Σ_{l≠j} sqrt(ρ_l / ρ_j) Y_jp Y_lp ) },  Z_p = Σ_j Y_jp²
//! ```
//!
//! with `Y_jp` i.i.d. standard normal and `λ_p` the eigenvalues of the
//! integral operator of
//! `K̃(x, y) = <(K(x,·) - m)⊗² - V, (K(y,·) - m)⊗² - V>`.
//!
//! Estimating `λ_p`: write `M = HΛH` (pooled centering), so that
//! `M_xy ≈ <K(x,·) - m, K(y,·) - m>`. Since `<a⊗a, b⊗b> = <a, b>²` and
//! `<a⊗a, V> = E_z <a, K(z,·) - m>²`, the plug-in `K̃` is the double-centered
//! entrywise square `H (M∘M) H`. Its eigenvalues divided by `n` approximate
//! those of the integral operator under the pooled empirical measure.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{GramBlocks, GroupWeights};
use crate::statistic::{centered_block, mmvd_statistic};
use crate::streams::stream_rng;

/// Fraction of the estimated trace kept by [`NullSpectrum::default_truncation`].
pub const TRACE_FRACTION: f64 = 0.999;
pub const DEFAULT_NULL_DRAWS: usize = 10_000;
const DRAW_BATCH: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSpectrum {
    /// Nonincreasing, nonnegative.
    pub eigenvalues: Vec<f64>,
    /// Limit group proportions.
    pub rho: Vec<f64>,
}

impl NullSpectrum {
    /// Validates and normalizes raw eigenvalue estimates: sorts them
    /// nonincreasing, clamps tiny negatives to zero and rejects negatives
    /// below `-1e-8 · λ_max`.
    pub fn new(mut eigenvalues: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        if eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("eigenvalues must be finite"));
        }
        if rho.len() < 2 || rho.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            return Err(Error::invalid(
                "rho needs at least 2 entries strictly between 0 and 1",
            ));
        }
        let total: f64 = rho.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("rho must sum to 1, got {total}")));
        }
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        let top = eigenvalues.first().copied().unwrap_or(0.0).max(0.0);
        for v in eigenvalues.iter_mut() {
            if *v < 0.0 {
                if *v < -1e-8 * top {
                    return Err(Error::Consistency(format!(
                        "estimated eigenvalue {v:e} is too negative (largest is {top:e})"
                    )));
                }
                *v = 0.0;
            }
        }
        Ok(NullSpectrum { eigenvalues, rho })
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Smallest `P ≥ 1` whose leading eigenvalues carry `fraction` of the trace.
    pub fn truncation_for(&self, fraction: f64) -> usize {
        let target = fraction * self.trace();
        let mut acc = 0.0;
        for (p, v) in self.eigenvalues.iter().enumerate() {
            acc += v;
            if acc >= target {
                return (p + 1).max(1);
            }
        }
        self.eigenvalues.len().max(1)
    }

    pub fn default_truncation(&self) -> usize {
        self.truncation_for(TRACE_FRACTION)
    }

    pub fn truncated(&self, p: usize) -> NullSpectrum {
        NullSpectrum {
            eigenvalues: self.eigenvalues.iter().copied().take(p).collect(),
            rho: self.rho.clone(),
        }
    }
}

/// The plug-in matrix `H (M∘M) H / n` with `M = HΛH`, for a pooled kernel matrix.
pub fn degree_two_operator(full: &DMatrix<f64>) -> DMatrix<f64> {
    let n = full.nrows();
    let m = centered_block(full.as_view());
    let w = m.component_mul(&m);
    let c = centered_block(w.as_view()) / n as f64;
    (&c + c.transpose()) * 0.5
}

/// Raw (unsorted, unclamped) eigenvalues of [`degree_two_operator`].
pub fn pooled_spectrum(full: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = full.nrows();
    if n < 3 || full.ncols() != n {
        return Err(Error::invalid(format!(
            "spectrum estimation needs a square pooled matrix with at least 3 observations, got {}x{}",
            full.nrows(),
            full.ncols()
        )));
    }
    let eig = SymmetricEigen::new(degree_two_operator(full));
    Ok(eig.eigenvalues.iter().copied().collect())
}

pub fn estimate_spectrum(gram: &GramBlocks) -> Result<NullSpectrum> {
    let n = gram.n_total();
    let rho = gram.sizes().iter().map(|&s| s as f64 / n as f64).collect();
    NullSpectrum::new(pooled_spectrum(gram.full())?, rho)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullSample {
    pub draws: Vec<f64>,
    pub truncation: usize,
    pub seed: u64,
}

/// Draws from the limiting law using every eigenvalue of `spectrum`
/// (truncate it first). The `Z_p` chi-square terms are built from the same
/// normals that enter the cross terms.
pub fn sample_null(spectrum: &NullSpectrum, k: usize, n_draws: usize, seed: u64) -> Result<NullSample> {
    if spectrum.eigenvalues.is_empty() {
        return Err(Error::invalid("spectrum is empty"));
    }
    if k != spectrum.rho.len() {
        return Err(Error::invalid(format!(
            "k = {k} but the spectrum carries {} proportions",
            spectrum.rho.len()
        )));
    }
    if n_draws == 0 {
        return Err(Error::invalid("n_draws must be positive"));
    }
    let rho = &spectrum.rho;
    let inv_rho: Vec<f64> = rho.iter().map(|r| 1.0 / r).collect();
    let kf = k as f64;
    // cross[j][l] = sqrt(ρ_l / ρ_j)
    let cross: Vec<Vec<f64>> = rho
        .iter()
        .map(|rj| rho.iter().map(|rl| (rl / rj).sqrt()).collect())
        .collect();

    let n_batches = n_draws.div_ceil(DRAW_BATCH);
    let batches: Vec<Vec<f64>> = (0..n_batches)
        .into_par_iter()
        .map(|batch| {
            let mut rng = stream_rng(seed, batch as u64);
            let len = DRAW_BATCH.min(n_draws - batch * DRAW_BATCH);
            let mut y = vec![0.0; k];
            (0..len)
                .map(|_| {
                    let mut total = 0.0;
                    for &lambda in &spectrum.eigenvalues {
                        y.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                        let z: f64 = y.iter().map(|v| v * v).sum();
                        let mut form = (kf - 2.0) * z;
                        for j in 0..k {
                            let mut off = 0.0;
                            for l in 0..k {
                                if l != j {
                                    off += cross[j][l] * y[l];
                                }
                            }
                            form += y[j] * (inv_rho[j] * y[j] - 2.0 * off);
                        }
                        total += lambda * form;
                    }
                    total
                })
                .collect()
        })
        .collect();

    Ok(NullSample {
        draws: batches.into_iter().flatten().collect(),
        truncation: spectrum.eigenvalues.len(),
        seed,
    })
}

/// Empirical quantile, taking the smallest draw whose rank is at least
/// `ceil(level · n_draws)`.
pub fn quantile(sample: &NullSample, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("quantile level {level} outside (0, 1)")));
    }
    if sample.draws.is_empty() {
        return Err(Error::invalid("no draws"));
    }
    let mut sorted = sample.draws.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // the small slack keeps e.g. 0.95 · 100 at rank 95
    let rank = ((level * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    Ok(sorted[rank - 1])
}

/// Upper-`alpha` critical value of the sampled law.
pub fn critical_value(sample: &NullSample, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha {alpha} outside (0, 1)")));
    }
    if sample.draws.len() < 100 {
        return Err(Error::invalid(format!(
            "at least 100 draws are needed for a critical value, got {}",
            sample.draws.len()
        )));
    }
    quantile(sample, 1.0 - alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDecision {
    /// `n · T` with proportional weights.
    pub scaled_statistic: f64,
    pub critical_value: f64,
    pub truncation: usize,
    pub reject: bool,
}

/// Calibrates the observed MMVD statistic against the estimated limiting law.
pub fn spectral_test(gram: &GramBlocks, alpha: f64, n_draws: usize, seed: u64) -> Result<SpectralDecision> {
    let weights = GroupWeights::proportional(gram.sizes())?;
    let stat = mmvd_statistic(gram, &weights)?;
    let spectrum = estimate_spectrum(gram)?;
    let truncated = spectrum.truncated(spectrum.default_truncation());
    let sample = sample_null(&truncated, gram.n_groups(), n_draws, seed)?;
    let critical_value = critical_value(&sample, alpha)?;
    let scaled_statistic = gram.n_total() as f64 * stat.value;
    Ok(SpectralDecision {
        scaled_statistic,
        critical_value,
        truncation: truncated.eigenvalues.len(),
        reject: scaled_statistic > critical_value,
    })
}
