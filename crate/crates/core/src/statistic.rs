//! MMVD statistic from Gram blocks, plus the GMMD mean-embedding baseline.
//!
//! With `Q_j = I - 1 1ᵀ / n_j` the group centering projector, the empirical
//! covariance embeddings satisfy
//!
//! ```text
//! <V_j, V_l> = tr(Q_j Λ(j,l) Q_l Λ(l,j)) / (n_j n_l) = ||Q_j Λ(j,l) Q_l||_F² / (n_j n_l)
//! ```
//!
//! because each `Q` is a symmetric idempotent. Everything below is built
//! on that identity; the `j == l` case gives `||V_j||²`.

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{GramBlocks, GroupWeights};

/// Negative squared distances above `-PAIR_GUARD * scale` are rounding noise.
const PAIR_GUARD: f64 = 1e-12;

/// Which Gram-based statistic to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StatisticKind {
    #[serde(rename = "MMVD")]
    Mmvd,
    #[serde(rename = "GMMD")]
    Gmmd,
}

impl StatisticKind {
    pub fn name(self) -> &'static str {
        match self {
            StatisticKind::Mmvd => "MMVD",
            StatisticKind::Gmmd => "GMMD",
        }
    }

    pub fn evaluate(self, gram: &GramBlocks, weights: &GroupWeights) -> Result<f64> {
        match self {
            StatisticKind::Mmvd => mmvd_statistic(gram, weights).map(|s| s.value),
            StatisticKind::Gmmd => gmmd_statistic(gram, weights),
        }
    }
}

/// Observed MMVD value with its decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestStatistic {
    pub value: f64,
    /// `||V_j - V_l||²`, symmetric with zero diagonal.
    pub pair_mvd_sq: Vec<Vec<f64>>,
    pub weights: GroupWeights,
    /// `||V_j||²`
    pub hs_norms: Vec<f64>,
    /// `<V_j, V_l>`
    pub hs_inners: Vec<Vec<f64>>,
}

impl TestStatistic {
    /// `Σ_j (1 + (k-2) π_j) ||V_j||² - 2 Σ_j Σ_{l≠j} π_l <V_j, V_l>`.
    pub fn collected_form(&self) -> f64 {
        let pi = self.weights.as_slice();
        let k = pi.len() as f64;
        let mut diag = 0.0;
        let mut cross = 0.0;
        for j in 0..pi.len() {
            diag += (1.0 + (k - 2.0) * pi[j]) * self.hs_norms[j];
            for l in 0..pi.len() {
                if l != j {
                    cross += pi[l] * self.hs_inners[j][l];
                }
            }
        }
        diag - 2.0 * cross
    }

    /// Magnitude used for relative comparisons of the statistic.
    pub fn scale(&self) -> f64 {
        self.hs_norms.iter().sum::<f64>().max(f64::MIN_POSITIVE)
    }
}

fn means(block: &DMatrixView<'_, f64>) -> (Vec<f64>, Vec<f64>, f64) {
    let (rows, cols) = block.shape();
    let mut row_means = vec![0.0; rows];
    let mut col_means = vec![0.0; cols];
    for c in 0..cols {
        for r in 0..rows {
            let v = block[(r, c)];
            row_means[r] += v;
            col_means[c] += v;
        }
    }
    let grand = row_means.iter().sum::<f64>() / (rows * cols) as f64;
    row_means.iter_mut().for_each(|m| *m /= cols as f64);
    col_means.iter_mut().for_each(|m| *m /= rows as f64);
    (row_means, col_means, grand)
}

/// `Q_left · block · Q_right`: row, column and grand means removed.
pub fn centered_block(block: DMatrixView<'_, f64>) -> DMatrix<f64> {
    let (row_means, col_means, grand) = means(&block);
    DMatrix::from_fn(block.nrows(), block.ncols(), |r, c| {
        block[(r, c)] - row_means[r] - col_means[c] + grand
    })
}

/// `||Q_left · block · Q_right||_F²` without materializing the centered block.
pub(crate) fn centered_frobenius_sq(block: &DMatrixView<'_, f64>) -> f64 {
    let (row_means, col_means, grand) = means(block);
    let mut acc = 0.0;
    for c in 0..block.ncols() {
        let shift = grand - col_means[c];
        for r in 0..block.nrows() {
            let v = block[(r, c)] - row_means[r] + shift;
            acc += v * v;
        }
    }
    acc
}

/// `||V_j||²` from the within-group block.
pub fn hs_norm_sq(block: DMatrixView<'_, f64>) -> Result<f64> {
    if block.nrows() != block.ncols() {
        return Err(Error::invalid(format!(
            "within-group block must be square, got {}x{}",
            block.nrows(),
            block.ncols()
        )));
    }
    let n = block.nrows();
    hs_inner(block, n, n)
}

/// `<V_j, V_l>` from the cross block `Λ(j,l)` of shape `n_j × n_l`.
pub fn hs_inner(block: DMatrixView<'_, f64>, n_j: usize, n_l: usize) -> Result<f64> {
    if block.shape() != (n_j, n_l) {
        return Err(Error::invalid(format!(
            "block is {}x{} but group sizes are {n_j}x{n_l}",
            block.nrows(),
            block.ncols()
        )));
    }
    if n_j == 0 || n_l == 0 {
        return Err(Error::invalid("empty group"));
    }
    Ok(centered_frobenius_sq(&block) / (n_j as f64 * n_l as f64))
}

fn check_weights(gram: &GramBlocks, weights: &GroupWeights) -> Result<()> {
    if weights.len() != gram.n_groups() {
        return Err(Error::invalid(format!(
            "{} weights given for {} groups",
            weights.len(),
            gram.n_groups()
        )));
    }
    Ok(())
}

fn clamp_pair(d: f64, scale: f64, j: usize, l: usize) -> Result<f64> {
    if d >= 0.0 {
        Ok(d)
    } else if d >= -PAIR_GUARD * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(Error::Consistency(format!(
            "squared distance between groups {} and {} is negative ({d:e})",
            j + 1,
            l + 1
        )))
    }
}

/// `T = Σ_j Σ_{l≠j} π_l ||V_j - V_l||²`.
pub fn mmvd_statistic(gram: &GramBlocks, weights: &GroupWeights) -> Result<TestStatistic> {
    check_weights(gram, weights)?;
    let k = gram.n_groups();
    let sizes = gram.sizes();
    let mut inners = vec![vec![0.0; k]; k];
    for j in 0..k {
        for l in j..k {
            let v = hs_inner(gram.block(j, l), sizes[j], sizes[l])?;
            inners[j][l] = v;
            inners[l][j] = v;
        }
    }
    let norms: Vec<f64> = (0..k).map(|j| inners[j][j]).collect();

    let mut pairs = vec![vec![0.0; k]; k];
    for j in 0..k {
        for l in (j + 1)..k {
            let d = norms[j] + norms[l] - 2.0 * inners[j][l];
            let d = clamp_pair(d, norms[j] + norms[l], j, l)?;
            pairs[j][l] = d;
            pairs[l][j] = d;
        }
    }

    let pi = weights.as_slice();
    let mut value = 0.0;
    for (j, row) in pairs.iter().enumerate() {
        for (l, d) in row.iter().enumerate() {
            if l != j {
                value += pi[l] * d;
            }
        }
    }

    let stat = TestStatistic {
        value,
        pair_mvd_sq: pairs,
        weights: weights.clone(),
        hs_norms: norms,
        hs_inners: inners,
    };
    debug_assert!(
        (stat.collected_form() - value).abs() <= 1e-10 * stat.scale().max(value),
        "pairwise {value} vs collected {}",
        stat.collected_form()
    );
    Ok(stat)
}

fn block_mean(block: DMatrixView<'_, f64>) -> f64 {
    block.sum() / (block.nrows() * block.ncols()) as f64
}

/// Baseline on kernel mean embeddings:
/// `Σ_j Σ_{l≠j} π_l ||m_j - m_l||²`, each squared distance from block means.
pub fn gmmd_statistic(gram: &GramBlocks, weights: &GroupWeights) -> Result<f64> {
    check_weights(gram, weights)?;
    let k = gram.n_groups();
    let mut means = vec![vec![0.0; k]; k];
    for j in 0..k {
        for l in j..k {
            let m = block_mean(gram.block(j, l));
            means[j][l] = m;
            means[l][j] = m;
        }
    }
    let pi = weights.as_slice();
    let mut value = 0.0;
    for j in 0..k {
        for l in 0..k {
            if l == j {
                continue;
            }
            let d = means[j][j] + means[l][l] - 2.0 * means[j][l];
            value += pi[l] * clamp_pair(d, means[j][j] + means[l][l], j, l)?;
        }
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn q(n: usize) -> DMatrix<f64> {
        DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
    }

    #[test]
    fn centering_constant_block_vanishes() {
        let b = DMatrix::from_element(3, 4, 2.5);
        assert!(centered_block(b.as_view()).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn centering_matches_explicit_projectors() {
        let b = DMatrix::from_row_slice(2, 3, &[0.9, 0.2, 0.4, 0.1, 0.7, 0.3]);
        let c = centered_block(b.as_view());
        let explicit = q(2) * &b * q(3);
        assert!((&c - &explicit).abs().max() < 1e-15);
        for r in 0..2 {
            assert!(c.row(r).sum().abs() < 1e-15);
        }
        for col in 0..3 {
            assert!(c.column(col).sum().abs() < 1e-15);
        }
        let again = centered_block(c.as_view());
        assert!((&again - &c).abs().max() < 1e-15);
    }

    #[test]
    fn two_by_two_norm() {
        let a = 0.3;
        let b = DMatrix::from_row_slice(2, 2, &[1.0, a, a, 1.0]);
        let v = hs_norm_sq(b.as_view()).unwrap();
        assert!((v - (1.0f64 - a).powi(2) / 4.0).abs() < 1e-15);
        assert_eq!(v, hs_inner(b.as_view(), 2, 2).unwrap());
    }

    #[test]
    fn dimension_errors() {
        let b = DMatrix::from_element(2, 3, 1.0);
        assert!(hs_norm_sq(b.as_view()).is_err());
        assert!(hs_inner(b.as_view(), 3, 2).is_err());
        assert_eq!(hs_inner(b.as_view(), 2, 3).unwrap(), 0.0);
    }

    fn demo_gram() -> GramBlocks {
        // 2 + 2 pooled observations, exactly symmetric
        let m = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.8, 0.1, 0.3, //
            0.8, 1.0, 0.2, 0.5, //
            0.1, 0.2, 1.0, 0.4, //
            0.3, 0.5, 0.4, 1.0,
        ]);
        GramBlocks::from_matrix(vec![2, 2], m).unwrap()
    }

    #[test]
    fn two_group_statistic_is_pair_distance() {
        let g = demo_gram();
        let w = GroupWeights::proportional(g.sizes()).unwrap();
        let s = mmvd_statistic(&g, &w).unwrap();
        // V1 norm: (1-0.8)²/4 = 0.01, V2 norm: (1-0.4)²/4 = 0.09
        assert!((s.hs_norms[0] - 0.01).abs() < 1e-15);
        assert!((s.hs_norms[1] - 0.09).abs() < 1e-15);
        // cross block [[0.1,0.3],[0.2,0.5]] centered: entries ±0.025, F² = 4·0.025² = 0.0025
        assert!((s.hs_inners[0][1] - 0.0025 / 4.0).abs() < 1e-15);
        let expected = 0.01 + 0.09 - 2.0 * 0.0025 / 4.0;
        assert!((s.value - expected).abs() < 1e-15);
        assert_eq!(s.pair_mvd_sq[0][1], s.value);
        assert!((s.collected_form() - s.value).abs() < 1e-15);
    }

    #[test]
    fn gmmd_by_hand() {
        let g = demo_gram();
        let w = GroupWeights::proportional(g.sizes()).unwrap();
        // means: within 1 = 0.9, within 2 = 0.7, cross = 0.275
        let d = 0.9 + 0.7 - 2.0 * 0.275;
        assert!((gmmd_statistic(&g, &w).unwrap() - d).abs() < 1e-15);
    }

    #[test]
    fn all_ones_gram_is_null() {
        let g = GramBlocks::from_matrix(vec![2, 3, 2], DMatrix::from_element(7, 7, 1.0)).unwrap();
        let w = GroupWeights::proportional(g.sizes()).unwrap();
        assert_eq!(mmvd_statistic(&g, &w).unwrap().value, 0.0);
        assert_eq!(gmmd_statistic(&g, &w).unwrap(), 0.0);
    }

    #[test]
    fn weight_count_mismatch() {
        let g = demo_gram();
        let w = GroupWeights::explicit(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(mmvd_statistic(&g, &w).is_err());
        assert!(gmmd_statistic(&g, &w).is_err());
    }

    #[test]
    fn large_negative_pair_is_a_consistency_error() {
        assert!(matches!(clamp_pair(-1e-3, 1.0, 0, 1), Err(Error::Consistency(_))));
        assert_eq!(clamp_pair(-1e-14, 1.0, 0, 1).unwrap(), 0.0);
    }
}
