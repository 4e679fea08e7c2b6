//! Ground-truth teachers and sup-gap estimates between vector fields.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::sampling::{point_in_ball, vf_lipschitz};
use crate::bounds::TeacherSpec;
use crate::error::{Error, Result};
use crate::linalg::{distance, norm};
use crate::model::{predict, vector_field_eval, Activation, ModelParams, VectorFieldParams};
use crate::paths::SampledPath;
use crate::rng::stream_rng;

/// A model designated as ground truth, with bounded uniform output noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherModel {
    pub params: ModelParams,
    pub noise_bound: f64,
    pub noise_seed: u64,
}

/// `y_i = f*(x_i) + ε_i` with `ε_i ~ U[−M_ε, M_ε]` drawn from sub-stream `i`.
pub fn teacher_generate(teacher: &TeacherModel, paths: &[SampledPath]) -> Result<Vec<(SampledPath, f64)>> {
    if !(teacher.noise_bound >= 0.0) {
        return Err(Error::validation("noise bound must be ≥ 0"));
    }
    paths
        .iter()
        .enumerate()
        .map(|(i, path)| {
            let pred = predict(&teacher.params, path).map_err(|e| Error::at_index(i, e))?;
            let eps = if teacher.noise_bound > 0.0 {
                let mut rng = stream_rng(teacher.noise_seed, i as u64);
                rng.gen_range(-teacher.noise_bound..=teacher.noise_bound)
            } else {
                0.0
            };
            Ok((path.clone(), pred + eps))
        })
        .collect()
}

/// Teacher constants computed from its actual parameters, for initial
/// values bounded by `b_x`.
pub fn teacher_spec(teacher: &TeacherModel, b_x: f64) -> TeacherSpec {
    let p = &teacher.params;
    let act = p.activation;
    let g0 = vector_field_eval(&p.vf, &vec![0.0; p.phi.len()], act)
        .map(|m| m.frobenius_norm())
        .unwrap_or(f64::NAN);
    TeacherSpec {
        lipschitz_gstar: vf_lipschitz(&p.vf, act),
        gstar_at_zero_opnorm: g0,
        b_phistar: act.lipschitz() * (p.init_weight.frobenius_norm() * b_x + norm(&p.init_bias)),
        noise_bound: teacher.noise_bound,
    }
}

/// Largest `‖G_a(u) − G_b(u)‖_F` over the given points.
pub fn max_field_gap_at(a: &VectorFieldParams, b: &VectorFieldParams, act: Activation, points: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .map(|u| {
            let ga = vector_field_eval(a, u, act).expect("dimension checked by caller");
            let gb = vector_field_eval(b, u, act).expect("dimension checked by caller");
            distance(ga.as_slice(), gb.as_slice())
        })
        .fold(0.0, f64::max)
}

/// Sampling estimate of `sup_{‖u‖ ≤ radius} ‖G_a(u) − G_b(u)‖_F`: the
/// origin, the points `±radius·e_i`, and `n_probe` uniform points in the
/// ball. This is a lower estimate of the true supremum.
pub fn estimate_sup_field_gap(
    a: &VectorFieldParams,
    b: &VectorFieldParams,
    act: Activation,
    radius: f64,
    n_probe: usize,
    seed: u64,
) -> Result<f64> {
    a.validate()?;
    b.validate()?;
    let p = a.p();
    if b.p() != p || b.d() != a.d() {
        return Err(Error::validation("vector fields have different shapes"));
    }
    let mut points = vec![vec![0.0; p]];
    for i in 0..p {
        for s in [radius, -radius] {
            let mut e = vec![0.0; p];
            e[i] = s;
            points.push(e);
        }
    }
    let mut rng = stream_rng(seed, 0);
    points.extend((0..n_probe).map(|_| point_in_ball(p, radius, &mut rng)));
    Ok(max_field_gap_at(a, b, act, &points))
}
