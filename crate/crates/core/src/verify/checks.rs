//! Inequality checks over randomized instances.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::sampling::{random_lipschitz_path, random_lipschitz_path_on, sample_params_in, vf_lipschitz};
use super::teacher::{max_field_gap_at, teacher_generate, teacher_spec, TeacherModel};
use super::{CheckResult, SLACK};
use crate::bounds::{
    approximation_bias_bound, c1_constant, flow_continuity_bound, kappa0, m_theta_d,
    outcome_bound, parameter_lipschitz_constants, FlowInputs, GridSpec, ParamSpace,
};
use crate::error::{Error, Result};
use crate::linalg::{distance, norm, Matrix};
use crate::model::{
    forward, init_state, predict, vector_field_eval, Activation, Dims, ModelParams, ParamGroup,
};
use crate::paths::{fill_forward, path_stats, random_subgrid_indices, sup_distance, SampledPath, SamplingGrid};
use crate::rng::{stream_rng, Rng};
use crate::training::{backward, loss_eval, LossKind, LossSpec};

const MAX_INTERVALS: usize = 40;

fn run_trials(name: &str, trials: usize, f: impl Fn(usize) -> CheckResult + Sync + Send) -> CheckResult {
    let parts: Vec<CheckResult> = (0..trials).into_par_iter().map(f).collect();
    CheckResult::merge_all(name, parts)
}

fn activation_for(trial: usize) -> Activation {
    if trial % 5 == 4 {
        Activation::Identity
    } else {
        Activation::Tanh
    }
}

fn params_json(p: &ModelParams) -> serde_json::Value {
    serde_json::to_value(p).unwrap_or(serde_json::Value::Null)
}

fn path_json(p: &SampledPath) -> serde_json::Value {
    json!({ "times": p.times(), "values": p.values() })
}

/// `|f_θ(x^D)| ≤ M_Θ^D` for random θ ∈ Θ and random Lipschitz paths.
pub fn check_output_bound(space: &ParamSpace, trials: usize, seed: u64) -> CheckResult {
    run_trials("output_bound", trials, |t| {
        let mut rng = stream_rng(seed, t as u64);
        let theta = sample_params_in(space, activation_for(t), &mut rng);
        let k = rng.gen_range(1..=MAX_INTERVALS);
        let path = random_lipschitz_path(k, space.d, space.l_x, space.b_x, &mut rng);
        let pred = predict(&theta, &path).expect("shapes match");
        let bound = m_theta_d(space, &GridSpec::of_grid(path.grid()));
        CheckResult::single("output_bound", pred.abs(), bound, SLACK, || {
            json!({ "trial": t, "prediction": pred, "bound": bound, "params": params_json(&theta), "path": path_json(&path) })
        })
    })
}

/// `‖G_ψ(z) − G_ψ(w)‖_F ≤ (L_σ B_A)^q ‖z − w‖` and `‖G_ψ(0)‖_F ≤ κ(0)`.
pub fn check_field_lipschitz(space: &ParamSpace, trials: usize, seed: u64) -> CheckResult {
    let lip = space.field_lipschitz();
    let kappa = kappa0(space);
    run_trials("field_lipschitz", trials, |t| {
        let mut rng = stream_rng(seed, t as u64);
        let theta = sample_params_in(space, activation_for(t), &mut rng);
        let scale = rng.gen_range(0.01..10.0);
        let z: Vec<f64> = (0..space.p).map(|_| rng.gen_range(-scale..scale)).collect();
        let spread = if rng.gen_bool(0.5) { 1e-3 } else { scale };
        let w: Vec<f64> = z.iter().map(|zi| zi + rng.gen_range(-spread..spread)).collect();
        let act = theta.activation;
        let gz = vector_field_eval(&theta.vf, &z, act).expect("shapes match");
        let gw = vector_field_eval(&theta.vf, &w, act).expect("shapes match");
        let empirical = distance(gz.as_slice(), gw.as_slice());
        let bound = lip * distance(&z, &w);
        let lipschitz = CheckResult::single("field_lipschitz", empirical, bound, SLACK, || {
            json!({ "trial": t, "gap": empirical, "bound": bound, "z": z, "w": w, "params": params_json(&theta) })
        });
        let g0 = vector_field_eval(&theta.vf, &vec![0.0; space.p], act)
            .expect("shapes match")
            .frobenius_norm();
        let at_zero = CheckResult::single("field_lipschitz", g0, kappa, SLACK, || {
            json!({ "trial": t, "field_at_zero": g0, "kappa0": kappa })
        });
        lipschitz.merge(at_zero)
    })
}

/// Which ingredients differ between the two compared systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowFamily {
    Field,
    Init,
    Path,
    Mixed,
}

impl FlowFamily {
    pub const ALL: [FlowFamily; 4] = [FlowFamily::Field, FlowFamily::Init, FlowFamily::Path, FlowFamily::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            FlowFamily::Field => "field",
            FlowFamily::Init => "init",
            FlowFamily::Path => "path",
            FlowFamily::Mixed => "mixed",
        }
    }
}

fn interpolate_group(target: &mut ModelParams, other: &ModelParams, g: ParamGroup, delta: f64) {
    let src = other.group(g).to_vec();
    for (x, o) in target.group_mut(g).iter_mut().zip(src) {
        *x = crate::linalg::lerp(*x, o, delta);
    }
}

fn second_path(path: &SampledPath, space: &ParamSpace, rng: &mut Rng) -> SampledPath {
    if rng.gen_bool(0.5) {
        // Fill-forward of a random sub-sampling: the discretization mechanism.
        let k = rng.gen_range(2..=path.len());
        let idx = random_subgrid_indices(path.len(), k, rng.gen()).expect("k within range");
        fill_forward(&path.restrict(&idx).expect("valid indices"), path.grid())
    } else {
        let other = random_lipschitz_path_on(path.grid(), space.d, space.l_x, space.b_x, rng);
        let delta: f64 = rng.gen();
        path.interpolate(&other, delta).expect("same grid")
    }
}

struct FlowInstance {
    inputs: FlowInputs,
    gap: f64,
    theta1: ModelParams,
    theta2: ModelParams,
    x: SampledPath,
    r: SampledPath,
}

/// Measured inputs of the flow-continuity bound for the recursions of
/// `theta1` driven by `x` and `theta2` driven by `r` (same grid), together
/// with the endpoint gap. Lipschitz constants and field gaps are taken from
/// the actual parameters and both trajectories.
pub fn flow_inputs(
    theta1: &ModelParams,
    x: &SampledPath,
    theta2: &ModelParams,
    r: &SampledPath,
) -> Result<(FlowInputs, f64)> {
    if theta1.activation != theta2.activation {
        return Err(Error::validation("compared models must share the activation"));
    }
    let act = theta1.activation;
    let wt = forward(theta1, x)?;
    let vt = forward(theta2, r)?;
    let zero = vec![0.0; theta1.dims().p];
    let f0 = vector_field_eval(&theta1.vf, &zero, act)?.frobenius_norm();
    let g0 = vector_field_eval(&theta2.vf, &zero, act)?.frobenius_norm();
    let mut points = wt.states.to_rows();
    points.extend(vt.states.to_rows());
    let field_gap = max_field_gap_at(&theta1.vf, &theta2.vf, act, &points);
    let w0 = wt.states.row(0);
    let v0 = vt.states.row(0);
    let inputs = FlowInputs {
        l_f: vf_lipschitz(&theta1.vf, act),
        l_g: vf_lipschitz(&theta2.vf, act),
        f0_norm: f0,
        g0_norm: g0,
        w0_norm: norm(w0),
        v0_norm: norm(v0),
        tv_x: path_stats(x).total_variation,
        tv_r: path_stats(r).total_variation,
        init_gap: distance(w0, v0),
        start_gap: distance(x.initial(), r.initial()),
        path_gap: sup_distance(x, r)?,
        field_gap,
    };
    Ok((inputs, distance(wt.terminal(), vt.terminal())))
}

fn flow_instance(space: &ParamSpace, family: FlowFamily, t: usize, seed: u64) -> FlowInstance {
    let mut rng = stream_rng(seed, t as u64);
    let act = activation_for(t);
    let theta1 = sample_params_in(space, act, &mut rng);
    let other = sample_params_in(space, act, &mut rng);
    let mut theta2 = theta1.clone();
    let delta: f64 = rng.gen();
    let dims = theta1.dims();
    for (g, _) in ModelParams::group_ranges(dims) {
        let vary = match family {
            FlowFamily::Field => matches!(g, ParamGroup::Weight(_) | ParamGroup::Bias(_)),
            FlowFamily::Init => g.is_init(),
            FlowFamily::Path => false,
            FlowFamily::Mixed => !g.is_readout(),
        };
        if vary {
            interpolate_group(&mut theta2, &other, g, delta);
        }
    }
    let k = rng.gen_range(2..=MAX_INTERVALS);
    let x = random_lipschitz_path(k, space.d, space.l_x, space.b_x, &mut rng);
    let r = match family {
        FlowFamily::Path | FlowFamily::Mixed => second_path(&x, space, &mut rng),
        _ => x.clone(),
    };
    let (inputs, gap) = flow_inputs(&theta1, &x, &theta2, &r).expect("shapes match");
    FlowInstance {
        inputs,
        gap,
        theta1,
        theta2,
        x,
        r,
    }
}

fn flow_json(t: usize, inst: &FlowInstance, bound: f64) -> serde_json::Value {
    json!({
        "trial": t,
        "gap": inst.gap,
        "bound": bound,
        "inputs": inst.inputs,
        "theta1": params_json(&inst.theta1),
        "theta2": params_json(&inst.theta2),
        "x": path_json(&inst.x),
        "r": path_json(&inst.r),
    })
}

/// Endpoint gap of two recursions versus the flow-continuity bound, one
/// result per family. Trial `t` uses family `t mod 4`.
pub fn check_flow_continuity_by_family(space: &ParamSpace, trials: usize, seed: u64) -> Vec<CheckResult> {
    let results: Vec<(usize, CheckResult)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let fam = t % FlowFamily::ALL.len();
            let family = FlowFamily::ALL[fam];
            let inst = flow_instance(space, family, t, seed);
            let bound = flow_continuity_bound(&inst.inputs).value;
            let name = format!("flow_continuity/{}", family.name());
            (fam, CheckResult::single(&name, inst.gap, bound, SLACK, || flow_json(t, &inst, bound)))
        })
        .collect();
    FlowFamily::ALL
        .iter()
        .enumerate()
        .map(|(i, family)| {
            CheckResult::merge_all(
                &format!("flow_continuity/{}", family.name()),
                results.iter().filter(|(f, _)| *f == i).map(|(_, r)| r.clone()),
            )
        })
        .collect()
}

/// All families merged.
pub fn check_flow_continuity(space: &ParamSpace, trials: usize, seed: u64) -> CheckResult {
    CheckResult::merge_all("flow_continuity", check_flow_continuity_by_family(space, trials, seed))
}

/// Same instances as [`check_flow_continuity_by_family`], compared against the
/// bound without the field-norm factor on the boundary terms and with the
/// total variation of the compared trajectory taken from `C_1` of the
/// other system. Diagnostic only: this form is not a valid bound when
/// fields exceed unit norm.
pub fn check_flow_continuity_printed_form(space: &ParamSpace, trials: usize, seed: u64) -> CheckResult {
    run_trials("flow_continuity_printed_form", trials, |t| {
        let family = FlowFamily::ALL[t % FlowFamily::ALL.len()];
        let inst = flow_instance(space, family, t, seed);
        let i = &inst.inputs;
        let primary = (i.init_gap
            + i.start_gap
            + i.path_gap * (1.0 + i.l_f * i.tv_r * c1_constant(i.l_f, i.f0_norm, i.w0_norm, i.tv_x))
            + i.field_gap * i.tv_r)
            * (i.l_f * i.tv_x).exp();
        let swapped = (i.init_gap
            + i.start_gap
            + i.path_gap * (1.0 + i.l_g * i.tv_x * c1_constant(i.l_g, i.g0_norm, i.v0_norm, i.tv_r))
            + i.field_gap * i.tv_x)
            * (i.l_g * i.tv_r).exp();
        let bound = primary.min(swapped);
        CheckResult::single("flow_continuity_printed_form", inst.gap, bound, SLACK, || flow_json(t, &inst, bound))
    })
}

/// `|f_{θ1}(x^D) − f_{θ2}(x^D)|` against the weighted parameter distance, for
/// depth-one fields (the depth of `space` is overridden to 1).
pub fn check_param_lipschitz(space: &ParamSpace, trials: usize, seed: u64) -> CheckResult {
    let space = ParamSpace { q: 1, ..*space };
    let lip = parameter_lipschitz_constants(&space);
    run_trials("param_lipschitz", trials, |t| {
        let mut rng = stream_rng(seed, t as u64);
        let act = activation_for(t);
        let theta1 = sample_params_in(&space, act, &mut rng);
        let other = sample_params_in(&space, act, &mut rng);
        let mut theta2 = theta1.clone();
        let delta: f64 = rng.gen();
        let stratum = t % 4;
        for (g, _) in ModelParams::group_ranges(theta1.dims()) {
            let vary = match stratum {
                0 => g.is_readout(),
                1 => matches!(g, ParamGroup::Weight(_) | ParamGroup::Bias(_)),
                2 => g.is_init(),
                _ => true,
            };
            if vary {
                interpolate_group(&mut theta2, &other, g, delta);
            }
        }
        let k = rng.gen_range(1..=MAX_INTERVALS);
        let path = random_lipschitz_path(k, space.d, space.l_x, space.b_x, &mut rng);
        let gap = (predict(&theta1, &path).expect("shapes") - predict(&theta2, &path).expect("shapes")).abs();
        let diff = |g: ParamGroup| distance(theta1.group(g), theta2.group(g));
        let bound = lip.weighted_distance(
            diff(ParamGroup::Phi),
            diff(ParamGroup::Weight(0)),
            diff(ParamGroup::Bias(0)),
            diff(ParamGroup::InitWeight),
            diff(ParamGroup::InitBias),
        );
        CheckResult::single("param_lipschitz", gap, bound, SLACK, || {
            json!({ "trial": t, "gap": gap, "bound": bound, "theta1": params_json(&theta1), "theta2": params_json(&theta2), "path": path_json(&path) })
        })
    })
}

/// `|y| ≤ B_Φ* (B_φ* + ‖G*(0)‖ L_x) e^{L_{G*} L_x} + M_ε` for random teachers
/// in Θ, with constants taken from the teacher's own parameters.
pub fn check_outcome_bound(space: &ParamSpace, trials: usize, seed: u64) -> CheckResult {
    run_trials("outcome_bound", trials, |t| {
        let mut rng = stream_rng(seed, t as u64);
        let params = sample_params_in(space, activation_for(t), &mut rng);
        let teacher = TeacherModel {
            params,
            noise_bound: rng.gen_range(0.0..0.5),
            noise_seed: rng.gen(),
        };
        let k = rng.gen_range(1..=MAX_INTERVALS);
        let path = random_lipschitz_path(k, space.d, space.l_x, space.b_x, &mut rng);
        let y = teacher_generate(&teacher, std::slice::from_ref(&path)).expect("shapes")[0].1;
        let spec = teacher_spec(&teacher, space.b_x);
        let bound = outcome_bound(&spec, norm(&teacher.params.phi), space.l_x);
        CheckResult::single("outcome_bound", y.abs(), bound, SLACK, || {
            json!({ "trial": t, "y": y, "bound": bound, "teacher": teacher, "path": path_json(&path) })
        })
    })
}

/// Per-sample `|f*(x) − f_θ(x)|` against the approximation-bias bound with
/// `L_ℓ = 1`, for a teacher in Θ and a student obtained by moving some of
/// its parameter groups. Gaps are measured on the instance itself.
pub fn check_approximation_bias(space: &ParamSpace, trials: usize, seed: u64) -> CheckResult {
    run_trials("approximation_bias", trials, |t| {
        let mut rng = stream_rng(seed, t as u64);
        let act = activation_for(t);
        let teacher = sample_params_in(space, act, &mut rng);
        let other = sample_params_in(space, act, &mut rng);
        let mut student = teacher.clone();
        let delta: f64 = rng.gen();
        let mut groups: Vec<ParamGroup> = ModelParams::group_ranges(teacher.dims()).into_iter().map(|(g, _)| g).collect();
        groups.shuffle(&mut rng);
        let n_vary = rng.gen_range(1..=groups.len());
        for &g in &groups[..n_vary] {
            interpolate_group(&mut student, &other, g, delta);
        }
        let k = rng.gen_range(1..=MAX_INTERVALS);
        let path = random_lipschitz_path(k, space.d, space.l_x, space.b_x, &mut rng);
        let zt = forward(&teacher, &path).expect("shapes");
        let zs = forward(&student, &path).expect("shapes");
        let gap = (zt.prediction - zs.prediction).abs();
        let field_gap = max_field_gap_at(&teacher.vf, &student.vf, act, &zs.states.to_rows());
        let init_gap = distance(
            &init_state(&teacher, path.initial()).expect("shapes"),
            &init_state(&student, path.initial()).expect("shapes"),
        );
        let phi_gap = distance(&teacher.phi, &student.phi);
        let tm = TeacherModel {
            params: teacher.clone(),
            noise_bound: 0.0,
            noise_seed: 0,
        };
        let spec = teacher_spec(&tm, space.b_x);
        let bound = approximation_bias_bound(space, 1.0, &spec, field_gap, init_gap, phi_gap);
        CheckResult::single("approximation_bias", gap, bound, SLACK, || {
            json!({ "trial": t, "gap": gap, "bound": bound, "field_gap": field_gap, "init_gap": init_gap, "phi_gap": phi_gap })
        })
    })
}

/// Random walk on `grid` with `N(0, Δt)` increments per channel, started
/// uniformly in `[−1, 1]^d`.
fn brownian_like_path(grid: SamplingGrid, d: usize, rng: &mut Rng) -> SampledPath {
    let times = grid.times().to_vec();
    let mut values = Matrix::zeros(times.len(), d);
    for j in 0..d {
        values.set(0, j, rng.gen_range(-1.0..1.0));
    }
    for k in 1..times.len() {
        let sd = (times[k] - times[k - 1]).sqrt();
        for j in 0..d {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            values.set(k, j, values.get(k - 1, j) + sd * z);
        }
    }
    SampledPath::new(grid, values).expect("shape matches grid")
}

/// Analytic gradients against central finite differences (step `1e-5`) on
/// random configurations with `q ∈ {1,2,3}`, `p ∈ {2,3,4}`, `d ∈ {1,2,3}`,
/// `K ∈ {3,10}`, fan-in-scaled parameters and Brownian-scale paths. A
/// coordinate passes when its absolute error is at most
/// `1e-8` or its relative error at most `1e-6`; `max_ratio` is the largest
/// error divided by its tolerance.
pub fn check_gradients(trials: usize, seed: u64) -> CheckResult {
    const H: f64 = 1e-5;
    run_trials("gradients", trials, |t| {
        let mut rng = stream_rng(seed, t as u64);
        let dims = Dims {
            q: rng.gen_range(1..=3),
            p: rng.gen_range(2..=4),
            d: rng.gen_range(1..=3),
        };
        let k = if rng.gen_bool(0.5) { 3 } else { 10 };
        let act = activation_for(t);
        let mut params = ModelParams::init_uniform_fan_in(dims, act, &mut rng);
        let mut flat = params.to_flat();
        let scale = rng.gen_range(0.5..2.0);
        flat.iter_mut().for_each(|x| *x *= scale);
        params.set_flat(&flat).expect("same length");
        let grid = if rng.gen_bool(0.5) {
            SamplingGrid::uniform(k).expect("k ≥ 1")
        } else {
            super::sampling::random_grid(k, &mut rng)
        };
        let path = brownian_like_path(grid, dims.d, &mut rng);
        let (kind, y) = if rng.gen_bool(0.5) {
            (LossKind::SquaredError, rng.gen_range(-1.0..1.0))
        } else {
            (LossKind::BinaryCrossEntropyWithLogit, f64::from(rng.gen_bool(0.5) as u8))
        };
        let spec = LossSpec::of_kind(kind);
        let analytic = backward(&params, &path, &spec, y).expect("finite").to_flat();
        let labels: Vec<(String, usize)> = ModelParams::group_ranges(dims)
            .into_iter()
            .flat_map(|(g, r)| r.clone().map(move |i| (g.label(), i - r.start)))
            .collect();
        let mut probe = params.clone();
        let eval = |probe: &mut ModelParams, f: &[f64]| {
            probe.set_flat(f).expect("same length");
            loss_eval(&spec, y, predict(probe, &path).expect("shapes")).expect("valid label")
        };
        let mut worst = (0.0f64, 0usize, 0.0f64, 0.0f64);
        for i in 0..flat.len() {
            let mut f = flat.clone();
            f[i] = flat[i] + H;
            let up = eval(&mut probe, &f);
            f[i] = flat[i] - H;
            let down = eval(&mut probe, &f);
            let fd = (up - down) / (2.0 * H);
            let err = (analytic[i] - fd).abs();
            let tol = 1e-8f64.max(1e-6 * analytic[i].abs().max(fd.abs()));
            let ratio = err / tol;
            if ratio > worst.0 || i == 0 {
                worst = (ratio, i, analytic[i], fd);
            }
        }
        let (ratio, i, a, fd) = worst;
        let (group, index) = labels[i].clone();
        // Compare ratio ≤ 1 exactly: the tolerance already encodes the slack.
        CheckResult::single("gradients", ratio, 1.0, 0.0, || {
            json!({ "trial": t, "dims": dims, "K": k, "loss": kind, "coordinate": { "group": group, "index": index }, "analytic": a, "finite_difference": fd })
        })
    })
}
