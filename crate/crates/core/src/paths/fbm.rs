//! Exact fractional Brownian motion on arbitrary grids by Cholesky
//! factorization of the covariance matrix.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{SampledPath, SamplingGrid};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{stream_rng, Rng};

const JITTER: f64 = 1e-12;

/// `Cov(B_s, B_t) = ½(s^{2H} + t^{2H} − |t−s|^{2H})`.
pub fn fbm_covariance(s: f64, t: f64, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (s.powf(h2) + t.powf(h2) - (t - s).abs().powf(h2))
}

/// Factorized covariance for one grid and Hurst exponent; reusable across
/// many draws.
#[derive(Debug, Clone)]
pub struct FbmGenerator {
    grid: SamplingGrid,
    hurst: f64,
    // Lower-triangular factor over times[1..] (B_0 = 0 is fixed), row-major.
    factor: Vec<f64>,
    n: usize,
}

impl FbmGenerator {
    pub fn new(grid: &SamplingGrid, hurst: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::validation(format!(
                "Hurst exponent must lie in (0, 1), got {hurst}"
            )));
        }
        let times = &grid.times()[1..];
        let n = times.len();
        let cov = DMatrix::from_fn(n, n, |i, j| fbm_covariance(times[i], times[j], hurst));
        let chol = match cov.clone().cholesky() {
            Some(c) => c,
            None => {
                let jittered = cov + DMatrix::identity(n, n) * JITTER;
                jittered.cholesky().ok_or_else(|| {
                    Error::Synthesis(format!(
                        "covariance is not positive definite (H = {hurst}, {n} points) even after jitter"
                    ))
                })?
            }
        };
        let l = chol.l();
        let mut factor = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                factor[i * n + j] = l[(i, j)];
            }
        }
        Ok(FbmGenerator {
            grid: grid.clone(),
            hurst,
            factor,
            n,
        })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn grid(&self) -> &SamplingGrid {
        &self.grid
    }

    /// One path with `d` independent fBM coordinates.
    pub fn sample(&self, d: usize, rng: &mut Rng) -> SampledPath {
        let n = self.n;
        let mut values = Matrix::zeros(n + 1, d);
        let mut xi = vec![0.0; n];
        for c in 0..d {
            for x in xi.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            for i in 0..n {
                let row = &self.factor[i * n..i * n + i + 1];
                let v: f64 = row.iter().zip(&xi).map(|(a, b)| a * b).sum();
                values.set(i + 1, c, v);
            }
        }
        SampledPath::new(self.grid.clone(), values).expect("shape matches grid")
    }
}

/// `n_paths` independent d-dimensional fBM paths on `grid`; path `i` uses
/// sub-stream `i` of `seed`.
pub fn sample_fbm(
    n_paths: usize,
    d: usize,
    grid: &SamplingGrid,
    hurst: f64,
    seed: u64,
) -> Result<Vec<SampledPath>> {
    if n_paths == 0 {
        return Err(Error::validation("n_paths must be at least 1"));
    }
    if d == 0 {
        return Err(Error::validation("fBM dimension must be at least 1"));
    }
    let generator = FbmGenerator::new(grid, hurst)?;
    Ok((0..n_paths)
        .into_par_iter()
        .map(|i| generator.sample(d, &mut stream_rng(seed, i as u64)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_covariance_is_min() {
        for &(s, t) in &[(0.2, 0.7), (0.5, 0.5), (0.9, 0.1)] {
            assert!((fbm_covariance(s, t, 0.5) - f64::min(s, t)).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_hurst() {
        let g = SamplingGrid::uniform(4).unwrap();
        for h in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(
                sample_fbm(1, 1, &g, h, 0),
                Err(Error::Validation(_))
            ));
        }
    }

    #[test]
    fn deterministic_and_starts_at_zero() {
        let g = SamplingGrid::uniform(30).unwrap();
        let a = sample_fbm(3, 2, &g, 0.4, 5).unwrap();
        let b = sample_fbm(3, 2, &g, 0.4, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        for p in &a {
            assert_eq!(p.initial(), &[0.0, 0.0]);
        }
    }

    #[test]
    fn first_paths_do_not_depend_on_batch_size() {
        let g = SamplingGrid::uniform(10).unwrap();
        let few = sample_fbm(2, 1, &g, 0.7, 9).unwrap();
        let many = sample_fbm(5, 1, &g, 0.7, 9).unwrap();
        assert_eq!(few[..], many[..2]);
    }
}
