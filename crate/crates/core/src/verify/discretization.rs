//! Discretization-gap scaling: predictions on nested coarse samplings of
//! densely sampled paths, compared with the linear-in-mesh bound.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{discretization_constant, m_theta, ParamSpace};
use crate::error::{Error, Result};
use crate::model::{predict, ModelParams};
use crate::paths::SampledPath;

/// Relative tolerance when checking that the mean gap does not grow as the
/// grid is refined.
const MONOTONE_TOL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationRow {
    pub k: usize,
    pub mesh: f64,
    pub mean_gap: f64,
    pub max_gap: f64,
    pub bound: f64,
    /// Largest per-path `gap / bound`.
    pub max_ratio: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationTable {
    pub rows: Vec<DiscretizationRow>,
    /// Least-squares slope of `log mean_gap` on `log mesh`; `None` with
    /// fewer than two positive gaps.
    pub slope: Option<f64>,
    pub nonincreasing: bool,
}

impl DiscretizationTable {
    pub fn violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }
}

/// Indices of `k + 1` nearly equispaced points among `n + 1` fine points.
fn coarse_indices(n: usize, k: usize) -> Vec<usize> {
    (0..=k).map(|i| ((i as u128 * n as u128 + k as u128 / 2) / k as u128) as usize).collect()
}

fn log_log_slope(rows: &[DiscretizationRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.mean_gap > 0.0 && r.mesh > 0.0)
        .map(|r| (r.mesh.ln(), r.mean_gap.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// For each `k` in `ladder`, restricts every fine path to `k` intervals and
/// records `|f_θ(x_fine) − f_θ(x_k)|` against `discretization_constant(space,
/// M_Θ) · mesh`. All fine paths must share one grid; the ladder is processed
/// in increasing `k`.
pub fn check_discretization_scaling(
    space: &ParamSpace,
    model: &ModelParams,
    fine_paths: &[SampledPath],
    ladder: &[usize],
) -> Result<DiscretizationTable> {
    space.validate()?;
    let first = fine_paths
        .first()
        .ok_or_else(|| Error::validation("no fine paths"))?;
    let grid = first.grid().clone();
    if fine_paths.iter().any(|p| p.grid() != &grid) {
        return Err(Error::validation("fine paths must share one grid"));
    }
    let n = grid.n_intervals();
    let mut ladder = ladder.to_vec();
    ladder.sort_unstable();
    ladder.dedup();
    if ladder.iter().any(|&k| k == 0 || k > n) {
        return Err(Error::validation(format!("ladder entries must lie in 1..={n}")));
    }
    let fine_preds: Vec<f64> = fine_paths
        .par_iter()
        .map(|p| predict(model, p))
        .collect::<Result<_>>()?;
    let constant = discretization_constant(space, m_theta(space));
    let mut rows = Vec::with_capacity(ladder.len());
    for &k in &ladder {
        let idx = coarse_indices(n, k);
        let gaps: Vec<f64> = fine_paths
            .par_iter()
            .zip(&fine_preds)
            .map(|(p, &fine)| Ok((predict(model, &p.restrict(&idx)?)? - fine).abs()))
            .collect::<Result<_>>()?;
        let mesh = p_mesh(&grid, &idx);
        let bound = constant * mesh;
        let max_gap = gaps.iter().copied().fold(0.0, f64::max);
        rows.push(DiscretizationRow {
            k,
            mesh,
            mean_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
            max_gap,
            bound,
            max_ratio: if bound > 0.0 { max_gap / bound } else if max_gap > 0.0 { f64::INFINITY } else { 0.0 },
            violations: gaps.iter().filter(|&&g| g > bound + super::SLACK).count(),
        });
    }
    let nonincreasing = rows
        .windows(2)
        .all(|w| w[1].mean_gap <= w[0].mean_gap * (1.0 + MONOTONE_TOL) + super::SLACK);
    Ok(DiscretizationTable {
        slope: log_log_slope(&rows),
        nonincreasing,
        rows,
    })
}

fn p_mesh(grid: &crate::paths::SamplingGrid, idx: &[usize]) -> f64 {
    let t = grid.times();
    idx.windows(2).map(|w| t[w[1]] - t[w[0]]).fold(0.0, f64::max)
}
