//! Closed-form constants and bounds: output bounds, Lipschitz constants in
//! the parameters, covering numbers, Rademacher complexity, generalization,
//! flow continuity, discretization and approximation bias, total risk.
//!
//! Matrix norms are Frobenius norms throughout; since the operator norm is
//! dominated by the Frobenius norm, every bound stated with operator norms
//! remains valid.
//!
//! Quantities that exceed the largest finite `f64` come out as `+∞`; a zero
//! factor always wins over an infinite one.

mod capacity;
mod report;

pub use capacity::{
    covering_number_log, generalization_bound, rademacher_bound, CapacityVariant, InputKind,
};
pub use capacity::capacity_constants;
pub use report::{bound_table, write_reports_csv, BoundReport, BoundsRequest};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::SamplingGrid;

/// Norm bounds describing Θ, plus the path constants the bounds consume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpace {
    pub b_a: f64,
    pub b_b: f64,
    pub b_u: f64,
    pub b_v: f64,
    pub b_phi: f64,
    pub q: usize,
    pub p: usize,
    pub d: usize,
    pub l_sigma: f64,
    /// Lipschitz constant of the driving paths (bounds their total variation).
    pub l_x: f64,
    /// Bound on the initial values `‖x_0‖`.
    pub b_x: f64,
}

impl ParamSpace {
    /// q = 1, p = 3, d = 2, every norm bound and path constant equal to 1.
    pub fn reference() -> Self {
        ParamSpace {
            b_a: 1.0,
            b_b: 1.0,
            b_u: 1.0,
            b_v: 1.0,
            b_phi: 1.0,
            q: 1,
            p: 3,
            d: 2,
            l_sigma: 1.0,
            l_x: 1.0,
            b_x: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bounds = [
            ("b_a", self.b_a),
            ("b_b", self.b_b),
            ("b_u", self.b_u),
            ("b_v", self.b_v),
            ("b_phi", self.b_phi),
            ("l_x", self.l_x),
            ("b_x", self.b_x),
        ];
        for (name, v) in bounds {
            if !(v >= 0.0) || v.is_infinite() {
                return Err(Error::validation(format!("{name} must be finite and ≥ 0, got {v}")));
            }
        }
        if self.q == 0 || self.p == 0 || self.d == 0 {
            return Err(Error::validation("q, p and d must be at least 1"));
        }
        if !(self.l_sigma > 0.0) || self.l_sigma.is_infinite() {
            return Err(Error::validation("l_sigma must be finite and > 0"));
        }
        Ok(())
    }

    /// `L_σ B_A`, the per-layer Lipschitz factor.
    pub fn layer_lipschitz(&self) -> f64 {
        self.l_sigma * self.b_a
    }

    /// `(L_σ B_A)^q`, the Lipschitz constant of every vector field in Θ.
    pub fn field_lipschitz(&self) -> f64 {
        self.layer_lipschitz().powi(self.q as i32)
    }

    /// Same space with the path constants replaced.
    pub fn with_paths(mut self, l_x: f64, b_x: f64) -> Self {
        self.l_x = l_x;
        self.b_x = b_x;
        self
    }
}

/// Mesh `|D|` and number of intervals `K` of a sampling grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub mesh: f64,
    pub n_intervals: usize,
}

impl GridSpec {
    pub fn new(mesh: f64, n_intervals: usize) -> Result<Self> {
        let g = GridSpec { mesh, n_intervals };
        g.validate()?;
        Ok(g)
    }

    pub fn uniform(n_intervals: usize) -> Result<Self> {
        if n_intervals == 0 {
            return Err(Error::validation("a grid needs at least one interval"));
        }
        GridSpec::new(1.0 / n_intervals as f64, n_intervals)
    }

    pub fn of_grid(grid: &SamplingGrid) -> Self {
        GridSpec {
            mesh: grid.mesh(),
            n_intervals: grid.n_intervals(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_intervals == 0 {
            return Err(Error::validation("a grid needs at least one interval"));
        }
        if !(self.mesh > 0.0 && self.mesh <= 1.0) {
            return Err(Error::validation(format!("mesh must lie in (0, 1], got {}", self.mesh)));
        }
        // K intervals covering [0, 1] force |D| ≥ 1/K (up to rounding).
        if self.mesh * (self.n_intervals as f64) < 1.0 - 1e-12 {
            return Err(Error::validation(format!(
                "mesh {} is too small for {} intervals",
                self.mesh, self.n_intervals
            )));
        }
        Ok(())
    }
}

/// Constants of the ground-truth CDE generating the outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherSpec {
    /// Lipschitz constant `L_{G*}` of the teacher field.
    pub lipschitz_gstar: f64,
    /// `‖G*(0)‖`.
    pub gstar_at_zero_opnorm: f64,
    /// `B_φ*`: bound on `‖φ*(u)‖` over `‖u‖ ≤ B_x`.
    pub b_phistar: f64,
    /// Noise bound `M_ε`.
    pub noise_bound: f64,
}

impl TeacherSpec {
    pub fn validate(&self) -> Result<()> {
        for v in [
            self.lipschitz_gstar,
            self.gstar_at_zero_opnorm,
            self.b_phistar,
            self.noise_bound,
        ] {
            if !(v >= 0.0) {
                return Err(Error::validation("teacher constants must be ≥ 0"));
            }
        }
        Ok(())
    }
}

/// Product where a zero factor yields zero even next to an infinite one.
pub(crate) fn prod(factors: &[f64]) -> f64 {
    if factors.contains(&0.0) {
        0.0
    } else {
        factors.iter().product()
    }
}

/// `Σ_{j=0}^{n-1} r^j`, summed term by term.
fn geometric_sum(r: f64, n: usize) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for _ in 0..n {
        sum += term;
        term *= r;
    }
    sum
}

/// `κ(0) = L_σ B_b Σ_{j<q} (L_σ B_A)^j`, a bound on `‖G_ψ(0)‖` over Θ.
pub fn kappa0(space: &ParamSpace) -> f64 {
    prod(&[
        space.l_sigma,
        space.b_b,
        geometric_sum(space.layer_lipschitz(), space.q),
    ])
}

/// `L_σ(B_U B_x + B_v + κ(0) L_x)`, the common factor of both output bounds.
fn output_core(space: &ParamSpace) -> f64 {
    space.l_sigma * (space.b_u * space.b_x + space.b_v + kappa0(space) * space.l_x)
}

/// `M_Θ = B_Φ L_σ exp((L_σ B_A)^q L_x)(B_U B_x + B_v + κ(0) L_x)`: bound on
/// `|f_θ(x)|` over Θ for paths with Lipschitz constant `L_x` and `‖x_0‖ ≤ B_x`.
pub fn m_theta(space: &ParamSpace) -> f64 {
    prod(&[
        space.b_phi,
        (space.field_lipschitz() * space.l_x).exp(),
        output_core(space),
    ])
}

/// `M_Θ^D = B_Φ L_σ (1 + (L_σ B_A)^q L_x |D|)^K (B_U B_x + B_v + κ(0) L_x)`:
/// bound on `|f_θ(x^D)|` on a grid with `K` intervals and mesh `|D|`.
pub fn m_theta_d(space: &ParamSpace, grid: &GridSpec) -> f64 {
    let growth = (grid.n_intervals as f64 * (space.field_lipschitz() * space.l_x * grid.mesh).ln_1p()).exp();
    prod(&[space.b_phi, growth, output_core(space)])
}

/// Constants `C_A^j(z)` and `C_b^j` controlling `‖G_{ψ1}(z) − G_{ψ2}(z)‖`
/// layer by layer: `C_A^j(z) = (L_σ B_A)^{q−j} L_σ (α_{j−1}‖z‖ + β_{j−1})`,
/// `C_b^j = (L_σ B_A)^{q−j} L_σ`, with `α_h = (L_σ B_A)^h` and
/// `β_h = L_σ B_b Σ_{i<h} (L_σ B_A)^i`. Index `j` is 1-based.
pub fn layer_gap_constants(space: &ParamSpace, j: usize, z_norm: f64) -> (f64, f64) {
    let r = space.layer_lipschitz();
    let outer = r.powi((space.q - j) as i32) * space.l_sigma;
    let alpha = r.powi((j - 1) as i32);
    let beta = prod(&[space.l_sigma, space.b_b, geometric_sum(r, j - 1)]);
    (outer * (alpha * z_norm + beta), outer)
}

/// Bound on `sup_{‖z‖ ≤ radius} ‖G_{ψ1}(z) − G_{ψ2}(z)‖` from per-layer
/// parameter distances.
pub fn field_gap_bound(space: &ParamSpace, radius: f64, d_weights: &[f64], d_biases: &[f64]) -> f64 {
    (1..=space.q)
        .map(|j| {
            let (ca, cb) = layer_gap_constants(space, j, radius);
            ca * d_weights[j - 1] + cb * d_biases[j - 1]
        })
        .sum()
}

/// Lipschitz constants of the predictor in its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamLipschitz {
    pub m_theta: f64,
    pub c_a: f64,
    pub c_b: f64,
    pub c_u: f64,
    pub c_v: f64,
    /// Radius of the ball Ω containing every latent trajectory.
    pub omega_radius: f64,
}

impl ParamLipschitz {
    /// `M‖ΔΦ‖ + C_A Σ‖ΔA_j‖ + C_b Σ‖Δb_j‖ + C_U‖ΔU‖ + C_v‖Δv‖`.
    pub fn weighted_distance(&self, d_phi: f64, sum_d_a: f64, sum_d_b: f64, d_u: f64, d_v: f64) -> f64 {
        prod(&[self.m_theta, d_phi])
            + prod(&[self.c_a, sum_d_a])
            + prod(&[self.c_b, sum_d_b])
            + prod(&[self.c_u, d_u])
            + prod(&[self.c_v, d_v])
    }
}

fn param_lipschitz_with(space: &ParamSpace, m: f64) -> ParamLipschitz {
    let radius = if space.b_phi > 0.0 {
        m / space.b_phi
    } else {
        // Without a readout the trajectory radius is the unscaled bound.
        m_theta(&ParamSpace { b_phi: 1.0, ..*space })
    };
    let flow = prod(&[space.b_phi, space.l_x, (space.field_lipschitz() * space.l_x).exp()]);
    let (mut max_ca, mut max_cb) = (0.0f64, 0.0f64);
    for j in 1..=space.q {
        let (ca, cb) = layer_gap_constants(space, j, radius);
        max_ca = max_ca.max(ca);
        max_cb = max_cb.max(cb);
    }
    let init = prod(&[space.b_phi, (space.layer_lipschitz() * space.l_x).exp(), space.l_sigma]);
    ParamLipschitz {
        m_theta: m,
        c_a: prod(&[flow, max_ca]),
        c_b: prod(&[flow, max_cb]),
        c_u: prod(&[init, space.b_x]),
        c_v: init,
        omega_radius: radius,
    }
}

/// Parameter-Lipschitz constants for continuous inputs; Ω has radius
/// `M_Θ / B_Φ`. `C_U` and `C_v` carry `exp(L_σ B_A L_x)`, which matches
/// the other constants' `exp((L_σ B_A)^q L_x)` only for `q = 1`.
pub fn parameter_lipschitz_constants(space: &ParamSpace) -> ParamLipschitz {
    param_lipschitz_with(space, m_theta(space))
}

/// Discretized variant: `M_Θ^D` in place of `M_Θ` and Ω of radius
/// `M_Θ^D / B_Φ`.
pub fn parameter_lipschitz_constants_discrete(space: &ParamSpace, grid: &GridSpec) -> ParamLipschitz {
    param_lipschitz_with(space, m_theta_d(space, grid))
}

/// `C_1(F) = [L_F(‖z_0‖ + ‖F(0)‖ L) e^{L_F L} + ‖F(0)‖] e^{L_F L}`: the
/// solution of `dz = F(z) dx` has total variation at most `C_1 · ‖x‖_{1-var}`
/// when `‖x‖_{1-var} ≤ L`.
pub fn c1_constant(l_f: f64, f0_norm: f64, z0_norm: f64, l_path: f64) -> f64 {
    let e = (l_f * l_path).exp();
    (prod(&[l_f, z0_norm + f0_norm * l_path, e]) + f0_norm) * e
}

/// Inputs of the flow-continuity bound comparing `dw = F(w) dx`, `w(0) = w_0`
/// with `dv = G(v) dr`, `v(0) = v_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowInputs {
    pub l_f: f64,
    pub l_g: f64,
    /// `‖F(0)‖`.
    pub f0_norm: f64,
    /// `‖G(0)‖`.
    pub g0_norm: f64,
    pub w0_norm: f64,
    pub v0_norm: f64,
    /// Total-variation bound of `x`.
    pub tv_x: f64,
    /// Total-variation bound of `r`.
    pub tv_r: f64,
    /// `‖w_0 − v_0‖`.
    pub init_gap: f64,
    /// `‖x_0 − r_0‖`.
    pub start_gap: f64,
    /// `‖x − r‖_∞`.
    pub path_gap: f64,
    /// Sup of `‖F(u) − G(u)‖` over a ball containing both trajectories.
    pub field_gap: f64,
}

/// The two exchangeable forms of the flow-continuity bound and their minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowBound {
    pub primary: f64,
    pub swapped: f64,
    pub value: f64,
}

/// Radius of the ball containing the solution of `dz = F(z) dx`:
/// `(‖z_0‖ + ‖F(0)‖ L) e^{L_F L}`.
pub fn trajectory_radius(l_f: f64, f0_norm: f64, z0_norm: f64, l_path: f64) -> f64 {
    (z0_norm + f0_norm * l_path) * (l_f * l_path).exp()
}

#[allow(clippy::too_many_arguments)]
fn flow_one_side(
    l_f: f64,
    tv_x: f64,
    // The other system, whose trajectory is the one F gets evaluated on.
    l_g: f64,
    g0_norm: f64,
    v0_norm: f64,
    tv_r: f64,
    f0_norm: f64,
    inp: &FlowInputs,
) -> f64 {
    // Integration by parts of ∫ F(v) d(x − r) leaves boundary terms
    // F(v_t)(x_t − r_t) − F(v_0)(x_0 − r_0); they carry sup ‖F(v)‖, which is
    // dropped when fields are bounded by 1.
    let f_sup = prod(&[l_f, trajectory_radius(l_g, g0_norm, v0_norm, tv_r)]) + f0_norm;
    let boundary = f_sup.max(1.0);
    let tv_v = prod(&[c1_constant(l_g, g0_norm, v0_norm, tv_r), tv_r]);
    let inner = inp.init_gap
        + prod(&[boundary, inp.start_gap])
        + prod(&[inp.path_gap, boundary + prod(&[l_f, tv_v])])
        + prod(&[inp.field_gap, tv_r]);
    prod(&[inner, (l_f * tv_x).exp()])
}

/// Bound on `‖w_1 − v_1‖`:
/// `(‖w_0−v_0‖ + β‖x_0−r_0‖ + ‖x−r‖_∞(β + L_F ‖v‖_{1-var}) + gap·L_r) e^{L_F L_x}`,
/// with `‖v‖_{1-var} ≤ C_1(G) L_r` and `β = max(1, sup‖F(v)‖)`, together
/// with the form obtained by exchanging the two systems. The minimum is
/// returned in `value`.
pub fn flow_continuity_bound(inp: &FlowInputs) -> FlowBound {
    let primary = flow_one_side(
        inp.l_f, inp.tv_x, inp.l_g, inp.g0_norm, inp.v0_norm, inp.tv_r, inp.f0_norm, inp,
    );
    let swapped = flow_one_side(
        inp.l_g,
        inp.tv_r,
        inp.l_f,
        inp.f0_norm,
        inp.w0_norm,
        inp.tv_x,
        inp.g0_norm,
        inp,
    );
    FlowBound {
        primary,
        swapped,
        value: primary.min(swapped),
    }
}

/// `C^1_Θ / L_ℓ`: per-sample constant of the discretization bias,
/// `B_Φ e^{L L_x} L_x [β + L (L m / B_Φ + κ(0)) L_x]` with
/// `L = (L_σ B_A)^q` and `β = max(1, L m / B_Φ + κ(0))`, the bound on
/// `‖G_ψ‖` along trajectories. `m` is the output bound in use.
pub fn discretization_constant(space: &ParamSpace, m: f64) -> f64 {
    let l = space.field_lipschitz();
    let radius = if space.b_phi > 0.0 { m / space.b_phi } else { 0.0 };
    let field_sup = prod(&[l, radius]) + kappa0(space);
    let bracket = field_sup.max(1.0) + prod(&[l, field_sup, space.l_x]);
    prod(&[space.b_phi, (l * space.l_x).exp(), space.l_x, bracket])
}

/// Discretization-bias bound `C^1_Θ |D|` with
/// `C^1_Θ = L_ℓ · discretization_constant(space, m)`. Pass
/// `m = min(M_Θ, M_Θ^D)` for the sharpest form; the result is exactly
/// linear in `mesh` for fixed `m`.
pub fn discretization_bias_bound(space: &ParamSpace, lipschitz_loss: f64, m: f64, mesh: f64) -> f64 {
    prod(&[lipschitz_loss, discretization_constant(space, m), mesh])
}

/// Approximation-bias bound
/// `L_ℓ B_Φ e^{L_{G*} L_x}(L_x·field_gap + init_gap) + (L_ℓ M_Θ / B_Φ)·phi_gap`.
pub fn approximation_bias_bound(
    space: &ParamSpace,
    lipschitz_loss: f64,
    teacher: &TeacherSpec,
    field_gap: f64,
    init_gap: f64,
    phi_gap: f64,
) -> f64 {
    let flow = prod(&[
        lipschitz_loss,
        space.b_phi,
        (teacher.lipschitz_gstar * space.l_x).exp(),
        space.l_x * field_gap + init_gap,
    ]);
    let readout = if phi_gap == 0.0 {
        0.0
    } else {
        lipschitz_loss * m_theta(space) / space.b_phi * phi_gap
    };
    flow + readout
}

/// `|y| ≤ B_Φ (B_φ* + ‖G*(0)‖ L_x) e^{L_{G*} L_x} + M_ε`.
pub fn outcome_bound(teacher: &TeacherSpec, b_phi: f64, l_x: f64) -> f64 {
    prod(&[
        b_phi,
        teacher.b_phistar + teacher.gstar_at_zero_opnorm * l_x,
        (teacher.lipschitz_gstar * l_x).exp(),
    ]) + teacher.noise_bound
}

/// Estimated sup-gaps between the model class and the teacher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapEstimates {
    pub field_gap: f64,
    pub init_gap: f64,
    pub phi_gap: f64,
}

/// The three addends of the total-risk bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalRisk {
    /// `4 max{Rad(F_Θ), Rad(F_Θ^D)}`.
    pub complexity: f64,
    pub discretization: f64,
    pub approximation: f64,
    pub total: f64,
}

/// Total-risk bound: complexity + discretization bias + approximation bias.
pub fn total_risk_bound(
    space: &ParamSpace,
    grid: &GridSpec,
    n: usize,
    loss_lipschitz: f64,
    teacher: &TeacherSpec,
    gaps: &GapEstimates,
) -> Result<TotalRisk> {
    let rad_c = rademacher_bound(space, InputKind::Continuous, n, CapacityVariant::Appendix)?;
    let rad_d = rademacher_bound(space, InputKind::Discrete(*grid), n, CapacityVariant::Appendix)?;
    let complexity = 4.0 * rad_c.max(rad_d);
    let m = m_theta(space).min(m_theta_d(space, grid));
    let discretization = discretization_bias_bound(space, loss_lipschitz, m, grid.mesh);
    let approximation = approximation_bias_bound(
        space,
        loss_lipschitz,
        teacher,
        gaps.field_gap,
        gaps.init_gap,
        gaps.phi_gap,
    );
    Ok(TotalRisk {
        complexity,
        discretization,
        approximation,
        total: complexity + discretization + approximation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn kappa_cases() {
        let mut s = ParamSpace::reference();
        s.b_b = 0.0;
        assert_eq!(kappa0(&s), 0.0);
        let s = ParamSpace { b_b: 0.7, ..ParamSpace::reference() };
        assert_eq!(kappa0(&s), 0.7);
        let s = ParamSpace { b_a: 2.0, q: 2, ..ParamSpace::reference() };
        assert_eq!(kappa0(&s), 3.0);
    }

    #[test]
    fn m_theta_by_hand() {
        let s = ParamSpace {
            b_a: 0.0,
            b_b: 0.0,
            b_v: 0.0,
            ..ParamSpace::reference()
        };
        assert_eq!(m_theta(&s), 1.0);
        let zero = ParamSpace {
            b_a: 0.0,
            b_b: 0.0,
            b_u: 0.0,
            b_v: 0.0,
            b_phi: 0.0,
            ..ParamSpace::reference()
        };
        assert_eq!(m_theta(&zero), 0.0);
        assert_eq!(m_theta_d(&zero, &GridSpec::uniform(10).unwrap()), 0.0);
        assert!((m_theta(&ParamSpace::reference()) - 3.0 * E).abs() < 1e-12);
    }

    #[test]
    fn overflow_becomes_infinite() {
        let s = ParamSpace { b_a: 50.0, q: 3, ..ParamSpace::reference() };
        assert_eq!(m_theta(&s), f64::INFINITY);
        let s0 = ParamSpace { b_phi: 0.0, ..s };
        assert_eq!(m_theta(&s0), 0.0);
    }

    #[test]
    fn c1_cases() {
        assert_eq!(c1_constant(0.0, 0.4, 3.0, 2.0), 0.4);
        assert_eq!(c1_constant(1.5, 0.0, 0.0, 2.0), 0.0);
        assert!((c1_constant(1.0, 1.0, 1.0, 1.0) - (2.0 * E + 1.0) * E).abs() < 1e-12);
    }

    #[test]
    fn grid_spec_validation() {
        assert!(GridSpec::new(0.5, 2).is_ok());
        assert!(GridSpec::new(0.4, 2).is_err());
        assert!(GridSpec::new(0.0, 2).is_err());
        assert!(GridSpec::new(1.5, 2).is_err());
        assert!(GridSpec::new(0.5, 0).is_err());
    }
}
