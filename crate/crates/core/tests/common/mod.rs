//! Test-only oracles, independent of the library's computation paths.
#![allow(dead_code)]

use mmvd::{GramBlocks, Grid};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random curves, one `Vec` per curve.
pub fn random_curves(rng: &mut ChaCha8Rng, n: usize, m: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..m).map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0)).collect())
        .collect()
}

/// Linear kernel `Σ_t w_t x(t) y(t)` Gram over pooled groups, upper triangle mirrored.
pub fn linear_gram(groups: &[Vec<Vec<f64>>], grid: &Grid) -> GramBlocks {
    let pooled: Vec<&Vec<f64>> = groups.iter().flatten().collect();
    let n = pooled.len();
    let w = grid.weights();
    let mut full = DMatrix::zeros(n, n);
    for i in 0..n {
        for r in i..n {
            let v: f64 = (0..w.len()).map(|l| w[l] * pooled[i][l] * pooled[r][l]).sum();
            full[(i, r)] = v;
            full[(r, i)] = v;
        }
    }
    GramBlocks::from_matrix(groups.iter().map(Vec::len).collect(), full).unwrap()
}

/// Feature vectors `sqrt(w) ⊙ x` so that the linear kernel is the Euclidean inner product.
pub fn features(curves: &[Vec<f64>], grid: &Grid) -> Vec<Vec<f64>> {
    curves
        .iter()
        .map(|c| c.iter().zip(grid.weights()).map(|(x, w)| w.sqrt() * x).collect())
        .collect()
}

/// Empirical covariance `(1/n) Σ (φ_i - φ̄)(φ_i - φ̄)ᵀ`.
pub fn covariance(feats: &[Vec<f64>]) -> DMatrix<f64> {
    let d = feats[0].len();
    let n = feats.len() as f64;
    let mean: Vec<f64> = (0..d).map(|a| feats.iter().map(|f| f[a]).sum::<f64>() / n).collect();
    let mut c = DMatrix::zeros(d, d);
    for f in feats {
        for a in 0..d {
            for b in 0..d {
                c[(a, b)] += (f[a] - mean[a]) * (f[b] - mean[b]) / n;
            }
        }
    }
    c
}

/// `Σ_j Σ_{l≠j} π_l ||C_j - C_l||_F²` with explicit covariance matrices.
pub fn covariance_statistic(covs: &[DMatrix<f64>], pi: &[f64]) -> f64 {
    let mut total = 0.0;
    for j in 0..covs.len() {
        for l in 0..covs.len() {
            if l != j {
                total += pi[l] * (&covs[j] - &covs[l]).norm_squared();
            }
        }
    }
    total
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, sorted nonincreasing.
pub fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// `I - 11ᵀ/n`
pub fn centering(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
