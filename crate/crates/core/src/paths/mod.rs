//! Driving paths: sampling grids, sampled paths and their statistics, the
//! fill-forward embedding, time augmentation and random downsampling.

mod fbm;
pub mod io;

pub use fbm::{fbm_covariance, sample_fbm, FbmGenerator};

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{distance, norm, Matrix};
use crate::rng::stream_rng;

/// Fine-grid resolution used as the stand-in for a continuous path.
pub const DEFAULT_FINE_INTERVALS: usize = 8192;

/// Strictly increasing timestamps `0 = t_0 < … < t_K = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SamplingGrid {
    times: Vec<f64>,
}

impl SamplingGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::validation("a sampling grid needs at least two points"));
        }
        if times[0] != 0.0 || times[times.len() - 1] != 1.0 {
            return Err(Error::validation("sampling grid must start at 0 and end at 1"));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::validation("sampling grid contains non-finite times"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("sampling grid must be strictly increasing"));
        }
        Ok(SamplingGrid { times })
    }

    /// Equidistant grid with `n_intervals` steps (`n_intervals + 1` points).
    pub fn uniform(n_intervals: usize) -> Result<Self> {
        if n_intervals == 0 {
            return Err(Error::validation("uniform grid needs at least one interval"));
        }
        let k = n_intervals as f64;
        let mut times: Vec<f64> = (0..=n_intervals).map(|i| i as f64 / k).collect();
        times[n_intervals] = 1.0;
        SamplingGrid::new(times)
    }

    /// Equidistant grid with `n_points` points.
    pub fn uniform_points(n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::validation("a sampling grid needs at least two points"));
        }
        SamplingGrid::uniform(n_points - 1)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// K, the number of increments.
    pub fn n_intervals(&self) -> usize {
        self.times.len() - 1
    }

    /// Largest gap between consecutive sampling times, `|D|`.
    pub fn mesh(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Index of the largest timestamp `≤ t`, clamped to the grid.
    pub fn locate(&self, t: f64) -> usize {
        let idx = self.times.partition_point(|&s| s <= t);
        idx.saturating_sub(1)
    }
}

impl TryFrom<Vec<f64>> for SamplingGrid {
    type Error = Error;

    fn try_from(times: Vec<f64>) -> Result<Self> {
        SamplingGrid::new(times)
    }
}

impl From<SamplingGrid> for Vec<f64> {
    fn from(g: SamplingGrid) -> Self {
        g.times
    }
}

/// A d-dimensional time series observed on a [`SamplingGrid`]; row `k` holds
/// the value at `t_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    grid: SamplingGrid,
    values: Matrix,
}

impl SampledPath {
    pub fn new(grid: SamplingGrid, values: Matrix) -> Result<Self> {
        if values.rows() != grid.len() {
            return Err(Error::validation(format!(
                "path has {} rows but grid has {} points",
                values.rows(),
                grid.len()
            )));
        }
        if values.cols() == 0 {
            return Err(Error::validation("path needs at least one channel"));
        }
        Ok(SampledPath { grid, values })
    }

    pub fn from_rows(grid: SamplingGrid, rows: Vec<Vec<f64>>) -> Result<Self> {
        SampledPath::new(grid, Matrix::from_rows(rows)?)
    }

    pub fn grid(&self) -> &SamplingGrid {
        &self.grid
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn times(&self) -> &[f64] {
        self.grid.times()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_intervals(&self) -> usize {
        self.grid.n_intervals()
    }

    #[inline]
    pub fn value(&self, k: usize) -> &[f64] {
        self.values.row(k)
    }

    pub fn initial(&self) -> &[f64] {
        self.value(0)
    }

    pub fn terminal(&self) -> &[f64] {
        self.value(self.len() - 1)
    }

    /// Writes `x_{t_k} - x_{t_{k-1}}` into `out`, for `k ≥ 1`.
    #[inline]
    pub fn increment_into(&self, k: usize, out: &mut [f64]) {
        let (a, b) = (self.value(k - 1), self.value(k));
        for ((o, x1), x0) in out.iter_mut().zip(b).zip(a) {
            *o = x1 - x0;
        }
    }

    pub fn increment_norms(&self) -> Vec<f64> {
        (1..self.len())
            .map(|k| distance(self.value(k), self.value(k - 1)))
            .collect()
    }

    /// Grid-restricted 1-variation `Σ ‖Δx_k‖`.
    pub fn total_variation(&self) -> f64 {
        self.increment_norms().iter().sum()
    }

    /// Values at the given grid indices, on the grid formed by their times.
    pub fn restrict(&self, indices: &[usize]) -> Result<SampledPath> {
        let times = indices.iter().map(|&i| self.times()[i]).collect();
        let grid = SamplingGrid::new(times)?;
        let rows = indices.iter().map(|&i| self.value(i).to_vec()).collect();
        SampledPath::from_rows(grid, rows)
    }

    /// `δ·self + (1 − δ)·other` on a shared grid, exact at the endpoints.
    pub fn interpolate(&self, other: &SampledPath, delta: f64) -> Result<SampledPath> {
        if self.grid != other.grid || self.dim() != other.dim() {
            return Err(Error::validation("paths must share grid and dimension"));
        }
        let data = self
            .values
            .as_slice()
            .iter()
            .zip(other.values.as_slice())
            .map(|(&x, &y)| crate::linalg::lerp(x, y, delta))
            .collect();
        SampledPath::new(
            self.grid.clone(),
            Matrix::from_vec(self.len(), self.dim(), data)?,
        )
    }

    /// Pointwise affine combination `a·self + b·other` on a shared grid.
    pub fn combine(&self, a: f64, other: &SampledPath, b: f64) -> Result<SampledPath> {
        if self.grid != other.grid || self.dim() != other.dim() {
            return Err(Error::validation("paths must share grid and dimension"));
        }
        let data = self
            .values
            .as_slice()
            .iter()
            .zip(other.values.as_slice())
            .map(|(x, y)| a * x + b * y)
            .collect();
        SampledPath::new(
            self.grid.clone(),
            Matrix::from_vec(self.len(), self.dim(), data)?,
        )
    }

    /// Same path shifted by a constant vector.
    pub fn shifted(&self, offset: &[f64]) -> Result<SampledPath> {
        if offset.len() != self.dim() {
            return Err(Error::validation("offset dimension mismatch"));
        }
        let mut values = self.values.clone();
        for k in 0..values.rows() {
            for (v, o) in values.row_mut(k).iter_mut().zip(offset) {
                *v += o;
            }
        }
        SampledPath::new(self.grid.clone(), values)
    }
}

/// Mesh and variation statistics of a sampled path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    pub mesh: f64,
    pub total_variation: f64,
    pub max_increment: f64,
    pub lipschitz_estimate: f64,
    pub initial_norm: f64,
}

pub fn path_stats(path: &SampledPath) -> PathStats {
    let times = path.times();
    let increments = path.increment_norms();
    let mut lipschitz_estimate: f64 = 0.0;
    for (k, inc) in increments.iter().enumerate() {
        lipschitz_estimate = lipschitz_estimate.max(inc / (times[k + 1] - times[k]));
    }
    PathStats {
        mesh: path.grid().mesh(),
        total_variation: increments.iter().sum(),
        max_increment: increments.iter().copied().fold(0.0, f64::max),
        lipschitz_estimate,
        initial_norm: norm(path.initial()),
    }
}

/// Prepends the timestamps as channel 0.
pub fn augment_time_channel(path: &SampledPath) -> SampledPath {
    let d = path.dim();
    let values = Matrix::from_fn(path.len(), d + 1, |k, j| {
        if j == 0 {
            path.times()[k]
        } else {
            path.value(k)[j - 1]
        }
    });
    SampledPath {
        grid: path.grid.clone(),
        values,
    }
}

/// Piecewise-constant (fill-forward) embedding evaluated on `query_grid`:
/// each query time takes the value at the latest source time not after it.
pub fn fill_forward(path: &SampledPath, query_grid: &SamplingGrid) -> SampledPath {
    let d = path.dim();
    let mut values = Matrix::zeros(query_grid.len(), d);
    for (k, &t) in query_grid.times().iter().enumerate() {
        let src = path.grid().locate(t);
        values.row_mut(k).copy_from_slice(path.value(src));
    }
    SampledPath {
        grid: query_grid.clone(),
        values,
    }
}

/// Keeps `k_points` timestamps drawn uniformly without replacement among the
/// interior points; 0 and 1 are always kept.
pub fn downsample_random(path: &SampledPath, k_points: usize, seed: u64) -> Result<SampledPath> {
    let indices = random_subgrid_indices(path.len(), k_points, seed)?;
    path.restrict(&indices)
}

/// Sorted indices of a random sub-grid of a grid with `n_points` points.
pub fn random_subgrid_indices(n_points: usize, k_points: usize, seed: u64) -> Result<Vec<usize>> {
    if k_points < 2 {
        return Err(Error::validation("downsampling needs k_points ≥ 2"));
    }
    if k_points > n_points {
        return Err(Error::validation(format!(
            "cannot keep {k_points} points out of {n_points}"
        )));
    }
    let interior = n_points - 2;
    let mut rng = stream_rng(seed, 0);
    let mut chosen: Vec<usize> = index::sample(&mut rng, interior, k_points - 2)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    chosen.push(0);
    chosen.push(n_points - 1);
    chosen.sort_unstable();
    Ok(chosen)
}

/// `max_k ‖fine_k − embedded_k‖` over a shared grid.
pub fn sup_distance(fine: &SampledPath, embedded: &SampledPath) -> Result<f64> {
    if fine.grid() != embedded.grid() {
        return Err(Error::validation(
            "sup_distance needs both paths on the same grid; fill-forward the coarse path first",
        ));
    }
    if fine.dim() != embedded.dim() {
        return Err(Error::validation("sup_distance dimension mismatch"));
    }
    Ok((0..fine.len())
        .map(|k| distance(fine.value(k), embedded.value(k)))
        .fold(0.0, f64::max))
}
