//! Sampling grids on [0, 1] and the trapezoidal L² geometry of curves
//! observed on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered sampling points in [0, 1] together with their composite
/// trapezoid weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// Builds a grid from strictly increasing points inside [0, 1].
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid(format!(
                "a grid needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("grid points must be finite"));
        }
        if points[0] < 0.0 || points[points.len() - 1] > 1.0 {
            return Err(Error::invalid("grid points must lie in [0, 1]"));
        }
        if let Some(w) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "grid points must be strictly increasing (position {})",
                w + 1
            )));
        }
        let weights = trapezoid_weights(&points);
        Ok(Grid { points, weights })
    }

    /// `n_points` equispaced points `(l - 1) / (n_points - 1)`, `l = 1..=n_points`.
    pub fn equispaced(n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::invalid(format!(
                "an equispaced grid needs at least 2 points, got {n_points}"
            )));
        }
        let last = (n_points - 1) as f64;
        Grid::new((0..n_points).map(|l| l as f64 / last).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Quadrature weights: half the spacing at each end, `(t[l+1] - t[l-1]) / 2` inside.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl TryFrom<Vec<f64>> for Grid {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Grid::new(points)
    }
}

impl From<Grid> for Vec<f64> {
    fn from(g: Grid) -> Self {
        g.points
    }
}

/// Convenience wrapper around [`Grid::equispaced`].
pub fn make_equispaced_grid(n_points: usize) -> Result<Grid> {
    Grid::equispaced(n_points)
}

fn trapezoid_weights(points: &[f64]) -> Vec<f64> {
    let m = points.len();
    (0..m)
        .map(|l| {
            let lo = points[l.saturating_sub(1)];
            let hi = points[(l + 1).min(m - 1)];
            (hi - lo) / 2.0
        })
        .collect()
}

/// Function values of one curve on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve(Vec<f64>);

impl Curve {
    pub fn new(values: Vec<f64>, grid: &Grid) -> Result<Self> {
        check_curve(&values, grid)?;
        Ok(Curve(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for Curve {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_curve(values: &[f64], grid: &Grid) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::invalid(format!(
            "curve has {} values but the grid has {} points",
            values.len(),
            grid.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("curve values must be finite"));
    }
    Ok(())
}

/// Trapezoidal approximation of `∫ (f(t) - g(t))² dt` over the grid span.
pub fn l2_sq_dist(f: &[f64], g: &[f64], grid: &Grid) -> Result<f64> {
    if f.len() != grid.len() || g.len() != grid.len() {
        return Err(Error::invalid(format!(
            "curve lengths ({}, {}) do not match the grid ({})",
            f.len(),
            g.len(),
            grid.len()
        )));
    }
    Ok(l2_sq_dist_unchecked(f, g, grid.weights()))
}

#[inline]
pub(crate) fn l2_sq_dist_unchecked(f: &[f64], g: &[f64], weights: &[f64]) -> f64 {
    f.iter()
        .zip(g)
        .zip(weights)
        .map(|((a, b), w)| {
            let d = a - b;
            w * d * d
        })
        .sum()
}

/// One group's curves, stored row-major (one row per observation).
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSample {
    grid: Grid,
    data: Vec<f64>,
    n_curves: usize,
}

impl FunctionalSample {
    pub fn new(grid: Grid, curves: Vec<Vec<f64>>) -> Result<Self> {
        let mut data = Vec::with_capacity(curves.len() * grid.len());
        for (i, row) in curves.iter().enumerate() {
            check_curve(row, &grid)
                .map_err(|e| Error::invalid(format!("curve {}: {e}", i + 1)))?;
            data.extend_from_slice(row);
        }
        Self::from_flat(grid, data)
    }

    /// Builds a sample from a row-major buffer whose length is a multiple of the grid size.
    pub fn from_flat(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if !data.len().is_multiple_of(grid.len()) {
            return Err(Error::invalid(format!(
                "buffer of {} values is not a whole number of curves on a {}-point grid",
                data.len(),
                grid.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("curve values must be finite"));
        }
        let n_curves = data.len() / grid.len();
        if n_curves < 2 {
            return Err(Error::invalid(format!(
                "a sample needs at least 2 curves, got {n_curves}"
            )));
        }
        Ok(FunctionalSample {
            grid,
            data,
            n_curves,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.n_curves
    }

    pub fn is_empty(&self) -> bool {
        self.n_curves == 0
    }

    pub fn curve(&self, i: usize) -> &[f64] {
        let m = self.grid.len();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn curves(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.grid.len())
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}
