mod common;

use approx::assert_relative_eq;
use common::*;
use mmvd::nulldist::{degree_two_operator, pooled_spectrum};
use mmvd::statistic::{gmmd_statistic, hs_inner, hs_norm_sq, mmvd_statistic};
use mmvd::{critical_value, estimate_spectrum, sample_null, GramBlocks, Grid, GroupWeights, NullSpectrum};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn linear_kernel_norms_match_explicit_covariances() {
    // three points in R² as curves on a 2-point grid [0, 1] (weights 1/2 each)
    let grid = Grid::new(vec![0.0, 1.0]).unwrap();
    let g1 = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, -2.0]];
    let g2 = vec![vec![0.0, 1.0], vec![2.0, 2.0], vec![-0.7, 0.1]];
    let gram = linear_gram(&[g1.clone(), g2.clone()], &grid);
    let c1 = covariance(&features(&g1, &grid));
    let c2 = covariance(&features(&g2, &grid));

    let n1 = hs_norm_sq(gram.block(0, 0)).unwrap();
    assert_relative_eq!(n1, c1.norm_squared(), max_relative = 1e-12);
    let inner = hs_inner(gram.block(0, 1), 3, 3).unwrap();
    assert_relative_eq!(inner, (&c1 * &c2).trace(), max_relative = 1e-12);

    let w = GroupWeights::proportional(gram.sizes()).unwrap();
    let stat = mmvd_statistic(&gram, &w).unwrap();
    assert_relative_eq!(stat.value, (&c1 - &c2).norm_squared(), max_relative = 1e-12);
}

#[test]
fn linear_kernel_statistic_on_random_groups() {
    let grid = Grid::equispaced(5).unwrap();
    let mut r = rng(17);
    for sizes in [[4usize, 6, 5], [2, 2, 9], [7, 3, 3]] {
        let groups: Vec<Vec<Vec<f64>>> = sizes.iter().map(|&n| random_curves(&mut r, n, 5, 2.0)).collect();
        let gram = linear_gram(&groups, &grid);
        let covs: Vec<DMatrix<f64>> = groups.iter().map(|g| covariance(&features(g, &grid))).collect();
        for pi in [
            GroupWeights::proportional(gram.sizes()).unwrap(),
            GroupWeights::explicit(vec![0.5, 0.3, 0.2]).unwrap(),
        ] {
            let stat = mmvd_statistic(&gram, &pi).unwrap();
            let oracle = covariance_statistic(&covs, pi.as_slice());
            assert!(rel_err(stat.value, oracle) < 1e-10, "{} vs {oracle}", stat.value);
            for j in 0..3 {
                for l in 0..3 {
                    let tr = (&covs[j] * &covs[l]).trace();
                    assert!(rel_err(stat.hs_inners[j][l], tr) < 1e-10);
                }
            }
        }
    }
}

#[test]
fn gmmd_with_linear_kernel_is_mean_distance() {
    let grid = Grid::equispaced(4).unwrap();
    let mut r = rng(5);
    let groups: Vec<Vec<Vec<f64>>> = [3usize, 4].iter().map(|&n| random_curves(&mut r, n, 4, 1.0)).collect();
    let gram = linear_gram(&groups, &grid);
    let means: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let f = features(g, &grid);
            (0..4).map(|a| f.iter().map(|v| v[a]).sum::<f64>() / f.len() as f64).collect()
        })
        .collect();
    let d2: f64 = (0..4).map(|a| (means[0][a] - means[1][a]).powi(2)).sum();
    let w = GroupWeights::proportional(gram.sizes()).unwrap();
    // π_2·d + π_1·d = d
    assert_relative_eq!(gmmd_statistic(&gram, &w).unwrap(), d2, max_relative = 1e-10);
}

#[test]
fn spectrum_of_hand_built_three_point_gram() {
    let lambda = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.2, 0.5, 1.0, 0.4, 0.2, 0.4, 1.0]);
    let h = centering(3);
    let m = &h * &lambda * &h;
    let w = m.component_mul(&m);
    let explicit = &h * &w * &h / 3.0;
    let expected = jacobi_eigenvalues(explicit.clone());

    let mut got = pooled_spectrum(&lambda).unwrap();
    got.sort_by(|a, b| b.total_cmp(a));
    for (g, e) in got.iter().zip(&expected) {
        assert!((g - e).abs() < 1e-14, "{g} vs {e}");
    }
    let op = degree_two_operator(&lambda);
    assert!((&op - &explicit).abs().max() < 1e-15);
    // eigenvalue sum equals the trace
    assert!((got.iter().sum::<f64>() - explicit.trace()).abs() < 1e-15);
}

#[test]
fn spectrum_matches_explicit_degree_two_features() {
    // linear kernel: K̃ is the inner product of vec((φ - φ̄)(φ - φ̄)ᵀ - C)
    let grid = Grid::equispaced(4).unwrap();
    let mut r = rng(99);
    let groups: Vec<Vec<Vec<f64>>> = [5usize, 7].iter().map(|&n| random_curves(&mut r, n, 4, 1.5)).collect();
    let gram = linear_gram(&groups, &grid);
    let pooled: Vec<Vec<f64>> = groups.concat();
    let feats = features(&pooled, &grid);
    let cov = covariance(&feats);
    let n = feats.len();
    let d = 4;
    let mean: Vec<f64> = (0..d).map(|a| feats.iter().map(|f| f[a]).sum::<f64>() / n as f64).collect();
    let psi: Vec<DMatrix<f64>> = feats
        .iter()
        .map(|f| {
            let c = DMatrix::from_fn(d, 1, |a, _| f[a] - mean[a]);
            &c * c.transpose() - &cov
        })
        .collect();
    let ktilde = DMatrix::from_fn(n, n, |i, j| psi[i].component_mul(&psi[j]).sum() / n as f64);
    let expected = jacobi_eigenvalues(ktilde);
    let spec = estimate_spectrum(&gram).unwrap();
    let scale = expected[0];
    for (g, e) in spec.eigenvalues.iter().zip(&expected) {
        assert!((g - e.max(0.0)).abs() < 1e-10 * scale, "{g} vs {e}");
    }
    // at most d(d+1)/2 nonzero eigenvalues
    assert!(spec.eigenvalues[d * (d + 1) / 2..].iter().all(|&v| v < 1e-10 * scale));
}

#[test]
fn psd_gram_gives_nonnegative_spectrum_on_random_data() {
    let grid = Grid::equispaced(6).unwrap();
    let mut r = rng(3);
    let groups: Vec<Vec<Vec<f64>>> = [6usize, 6, 6].iter().map(|&n| random_curves(&mut r, n, 6, 1.0)).collect();
    let samples: Vec<mmvd::FunctionalSample> = groups
        .into_iter()
        .map(|g| mmvd::FunctionalSample::new(grid.clone(), g).unwrap())
        .collect();
    let gram = mmvd::build_gram(&samples, &mmvd::KernelSpec::default()).unwrap();
    let ev = jacobi_eigenvalues(gram.full().clone());
    assert!(*ev.last().unwrap() > -1e-8 * 18.0);
    let spec = estimate_spectrum(&gram).unwrap();
    assert!(spec.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    assert!(spec.eigenvalues.iter().all(|&v| v >= 0.0));
}

#[test]
fn three_group_null_mean() {
    // E = λ · Σ_j (1/ρ_j + k - 2) = 3 · (3 + 1) = 12
    let spec = NullSpectrum::new(vec![1.0], vec![1.0 / 3.0, 1.0 / 3.0, 1.0 - 2.0 / 3.0]).unwrap();
    let s = sample_null(&spec, 3, 100_000, 2024).unwrap();
    let n = s.draws.len() as f64;
    let mean = s.draws.iter().sum::<f64>() / n;
    let sd = (s.draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((mean - 12.0).abs() < 3.0 * sd / n.sqrt(), "mean {mean}, se {}", sd / n.sqrt());
}

#[test]
fn two_group_draws_are_nonnegative() {
    let spec = NullSpectrum::new(vec![2.0, 0.5, 0.1], vec![0.3, 0.7]).unwrap();
    let s = sample_null(&spec, 2, 20_000, 8).unwrap();
    assert!(s.draws.iter().all(|&v| v >= -1e-12));
}

#[test]
fn critical_value_of_scaled_chi_square() {
    let spec = NullSpectrum::new(vec![1.0], vec![0.5, 0.5]).unwrap();
    let s = sample_null(&spec, 2, 100_000, 77).unwrap();
    let exact = 4.0 * ChiSquared::new(1.0).unwrap().inverse_cdf(0.95);
    assert!((exact - 15.366).abs() < 1e-3);
    let cv = critical_value(&s, 0.05).unwrap();
    // quantile standard error ≈ 0.09 at 1e5 draws
    assert!((cv - exact).abs() < 0.4, "{cv} vs {exact}");
}

#[test]
fn two_group_single_eigenvalue_is_scaled_chi_square() {
    let spec = NullSpectrum::new(vec![1.0], vec![0.5, 0.5]).unwrap();
    let s = sample_null(&spec, 2, 100_000, 1).unwrap();
    let mut r = rng(0xABCD);
    let analytic: Vec<f64> = (0..100_000)
        .map(|_| {
            let z: f64 = r.sample(StandardNormal);
            4.0 * z * z
        })
        .collect();
    let d = ks_statistic(&s.draws, &analytic);
    assert!(d < 0.02, "KS distance {d}");
}

#[test]
fn from_matrix_gram_feeds_statistics() {
    let m = DMatrix::from_element(4, 4, 0.5) + DMatrix::identity(4, 4) * 0.5;
    let g = GramBlocks::from_matrix(vec![2, 2], m).unwrap();
    let w = GroupWeights::proportional(g.sizes()).unwrap();
    // within-group differences are orthogonal across groups: ‖V1‖² = ‖V2‖² = 1/16, ⟨V1, V2⟩ = 0
    let s = mmvd_statistic(&g, &w).unwrap();
    assert_relative_eq!(s.hs_norms[0], 0.0625, max_relative = 1e-14);
    assert_eq!(s.hs_inners[0][1], 0.0);
    assert_relative_eq!(s.value, 0.125, max_relative = 1e-14);
}
