//! Multiple maximum variance discrepancy (MMVD) homogeneity test for
//! `k ≥ 2` groups of functional data.
//!
//! Curves observed on a common grid are compared through a Gaussian kernel
//! on their trapezoidal L² distance. The statistic is a weighted sum of
//! squared Hilbert–Schmidt distances between the groups' kernel covariance
//! embeddings, computed from centered Gram blocks. It is calibrated by
//! permutation ([`permtest`]) or against an estimate of its asymptotic
//! null law ([`nulldist`]).
//!
//! ```
//! use mmvd::{build_gram, mmvd_statistic, FunctionalSample, Grid, GroupWeights, KernelSpec};
//!
//! let grid = Grid::equispaced(3).unwrap();
//! let a = FunctionalSample::new(grid.clone(), vec![vec![0.0, 0.1, 0.0], vec![0.0, 0.4, 0.2]]).unwrap();
//! let b = FunctionalSample::new(grid, vec![vec![0.0, 1.0, 2.0], vec![0.0, -1.0, 0.5]]).unwrap();
//! let gram = build_gram(&[a, b], &KernelSpec::default()).unwrap();
//! let weights = GroupWeights::proportional(gram.sizes()).unwrap();
//! let stat = mmvd_statistic(&gram, &weights).unwrap();
//! assert!(stat.value > 0.0);
//! ```

pub mod cli;
pub mod error;
pub mod fda;
pub mod io;
pub mod kernels;
pub mod nulldist;
pub mod permtest;
pub mod simgen;
pub mod statistic;
pub mod streams;

pub use error::{Error, Result};
pub use fda::{l2_sq_dist, make_equispaced_grid, Curve, FunctionalSample, Grid};
pub use kernels::{build_gram, eval_kernel, GramBlocks, GroupWeights, KernelFamily, KernelSpec};
pub use nulldist::{critical_value, estimate_spectrum, sample_null, spectral_test, NullSample, NullSpectrum};
pub use permtest::{permutation_test, PermutationPlan, TestResult};
pub use simgen::{generate, monte_carlo, Model, ModelSpec, MonteCarloConfig, MonteCarloReport};
pub use statistic::{
    centered_block, gmmd_statistic, hs_inner, hs_norm_sq, mmvd_statistic, StatisticKind, TestStatistic,
};
