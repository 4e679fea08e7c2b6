//! Samplers for parameters inside Θ and for Lipschitz test paths.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::bounds::ParamSpace;
use crate::linalg::{norm, Matrix};
use crate::model::{Activation, Dims, ModelParams, ParamGroup, VectorFieldParams};
use crate::paths::{SampledPath, SamplingGrid};
use crate::rng::Rng;

/// Draws θ ∈ Θ: each group gets i.i.d. Gaussian entries, rescaled to a
/// uniformly random fraction of its norm bound.
pub fn sample_params_in(space: &ParamSpace, activation: Activation, rng: &mut Rng) -> ModelParams {
    let dims = Dims {
        q: space.q,
        p: space.p,
        d: space.d,
    };
    let mut params = ModelParams::gaussian(dims, activation, rng);
    for (g, _) in ModelParams::group_ranges(dims) {
        let bound = match g {
            ParamGroup::Phi => space.b_phi,
            ParamGroup::Weight(_) => space.b_a,
            ParamGroup::Bias(_) => space.b_b,
            ParamGroup::InitWeight => space.b_u,
            ParamGroup::InitBias => space.b_v,
        };
        let target = bound * rng.gen::<f64>();
        let n = params.group_norm(g);
        for x in params.group_mut(g) {
            *x = if n > 0.0 { *x * target / n } else { 0.0 };
        }
    }
    params
}

/// Lipschitz constant `Π_h L_σ ‖A_h‖_F` of a concrete vector field.
pub fn vf_lipschitz(vf: &VectorFieldParams, activation: Activation) -> f64 {
    vf.weights
        .iter()
        .map(|w| activation.lipschitz() * w.frobenius_norm())
        .product()
}

fn unit_vector(d: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Uniform point in the ball of radius `r`.
pub(crate) fn point_in_ball(d: usize, r: f64, rng: &mut Rng) -> Vec<f64> {
    let u: f64 = rng.gen();
    let rad = r * u.powf(1.0 / d as f64);
    unit_vector(d, rng).into_iter().map(|x| x * rad).collect()
}

/// Random grid with `k` intervals: `k − 1` distinct sorted uniform interior
/// points plus 0 and 1.
pub fn random_grid(k: usize, rng: &mut Rng) -> SamplingGrid {
    loop {
        let mut times: Vec<f64> = (0..k.saturating_sub(1)).map(|_| rng.gen::<f64>()).collect();
        times.push(0.0);
        times.push(1.0);
        times.sort_by(f64::total_cmp);
        if let Ok(g) = SamplingGrid::new(times) {
            return g;
        }
    }
}

/// Piecewise-linear path sampled on `grid`: `‖x_0‖ ≤ b_x` uniform in the
/// ball, each increment in a uniform direction with norm `l_x · Δt · s`,
/// `s ~ U(0, 1)`. Its Lipschitz constant, and hence its total variation,
/// are at most `l_x`.
pub fn random_lipschitz_path_on(grid: &SamplingGrid, d: usize, l_x: f64, b_x: f64, rng: &mut Rng) -> SampledPath {
    let times = grid.times();
    let mut values = Matrix::zeros(times.len(), d);
    values.row_mut(0).copy_from_slice(&point_in_ball(d, b_x, rng));
    for k in 1..times.len() {
        let s: f64 = rng.gen();
        let step = l_x * (times[k] - times[k - 1]) * s;
        let dir = unit_vector(d, rng);
        let prev = values.row(k - 1).to_vec();
        for (j, v) in values.row_mut(k).iter_mut().enumerate() {
            *v = prev[j] + step * dir[j];
        }
    }
    SampledPath::new(grid.clone(), values).expect("shape matches grid")
}

/// Continuous piecewise-linear path with `n_pieces` equal-duration pieces,
/// each moving in a uniform direction at speed `l_x · s`, `s ~ U(½, 1)`,
/// evaluated exactly at the times of `grid`. Lipschitz with constant `l_x`;
/// `‖x_0‖ ≤ b_x`.
pub fn random_piecewise_linear_path_on(
    grid: &SamplingGrid,
    d: usize,
    l_x: f64,
    b_x: f64,
    n_pieces: usize,
    rng: &mut Rng,
) -> SampledPath {
    let n_pieces = n_pieces.max(1);
    let start = point_in_ball(d, b_x, rng);
    let velocities: Vec<Vec<f64>> = (0..n_pieces)
        .map(|_| {
            let speed = l_x * rng.gen_range(0.5..=1.0);
            unit_vector(d, rng).into_iter().map(|u| u * speed).collect()
        })
        .collect();
    let width = 1.0 / n_pieces as f64;
    let mut knots = vec![start];
    for v in &velocities {
        let last = knots.last().expect("non-empty");
        let next = last.iter().zip(v).map(|(a, b)| a + b * width).collect();
        knots.push(next);
    }
    let values = Matrix::from_fn(grid.len(), d, |k, j| {
        let t = grid.times()[k];
        let piece = ((t / width) as usize).min(n_pieces - 1);
        knots[piece][j] + velocities[piece][j] * (t - piece as f64 * width)
    });
    SampledPath::new(grid.clone(), values).expect("shape matches grid")
}

/// [`random_lipschitz_path_on`] over a fresh random grid with `k` intervals.
pub fn random_lipschitz_path(k: usize, d: usize, l_x: f64, b_x: f64, rng: &mut Rng) -> SampledPath {
    let grid = random_grid(k, rng);
    random_lipschitz_path_on(&grid, d, l_x, b_x, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::path_stats;
    use crate::rng::stream_rng;

    #[test]
    fn sampled_params_are_inside() {
        let space = ParamSpace {
            b_a: 0.3,
            b_b: 2.0,
            q: 2,
            ..ParamSpace::reference()
        };
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            let m = sample_params_in(&space, Activation::Tanh, &mut rng);
            assert!(m.vf.max_weight_norm() <= 0.3 + 1e-12);
            assert!(m.vf.max_bias_norm() <= 2.0 + 1e-12);
            assert!(crate::linalg::norm(&m.phi) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn paths_respect_constants() {
        let mut rng = stream_rng(2, 0);
        for _ in 0..100 {
            let p = random_lipschitz_path(17, 3, 1.7, 0.5, &mut rng);
            let s = path_stats(&p);
            assert!(s.lipschitz_estimate <= 1.7 + 1e-12);
            assert!(s.total_variation <= 1.7 + 1e-12);
            assert!(s.initial_norm <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn piecewise_linear_path_is_lipschitz() {
        let mut rng = stream_rng(3, 0);
        let grid = SamplingGrid::uniform(1000).unwrap();
        let path = random_piecewise_linear_path_on(&grid, 3, 2.0, 1.5, 7, &mut rng);
        assert!(crate::linalg::norm(path.initial()) <= 1.5);
        let stats = path_stats(&path);
        assert!(stats.total_variation <= 2.0 + 1e-12);
        assert!(stats.total_variation >= 1.0 - 1e-12);
        assert!(stats.max_increment <= 2.0 * grid.mesh() + 1e-12);
    }
}
