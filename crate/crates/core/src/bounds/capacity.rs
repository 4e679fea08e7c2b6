//! Covering numbers, Rademacher complexity and the generalization bound.

use serde::{Deserialize, Serialize};

use super::{
    m_theta, m_theta_d, parameter_lipschitz_constants, parameter_lipschitz_constants_discrete,
    GridSpec, ParamLipschitz, ParamSpace,
};
use crate::error::{Error, Result};
use crate::training::LossSpec;

/// Whether the predictor class reads continuous paths or paths sampled on a
/// grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Continuous,
    Discrete(GridSpec),
}

/// Two groupings of the covering exponents exist: the one derived by
/// covering each parameter group separately (`Appendix`, used by default)
/// and a coarser grouping (`MainText`) kept for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityVariant {
    #[default]
    Appendix,
    MainText,
}

struct Capacity {
    m: f64,
    k1: f64,
    k2: f64,
}

fn capacity(space: &ParamSpace, input: InputKind) -> Capacity {
    let (m, lip): (f64, ParamLipschitz) = match input {
        InputKind::Continuous => (m_theta(space), parameter_lipschitz_constants(space)),
        InputKind::Discrete(g) => (m_theta_d(space, &g), parameter_lipschitz_constants_discrete(space, &g)),
    };
    let k1 = (space.b_phi * m).max(space.b_v * lip.c_v);
    let k2 = (space.b_b * lip.c_b)
        .max(space.b_a * lip.c_a)
        .max(space.b_u * lip.c_u);
    Capacity { m, k1, k2 }
}

/// `(K_1, K_2)`: `K_1 = max{B_Φ M, B_v C_v}`, `K_2 = max{B_b C_b, B_A C_A, B_U C_U}`.
pub fn capacity_constants(space: &ParamSpace, input: InputKind) -> (f64, f64) {
    let c = capacity(space, input);
    (c.k1, c.k2)
}

fn dims(space: &ParamSpace) -> (f64, f64, f64) {
    (space.q as f64, space.p as f64, space.d as f64)
}

/// Upper bound on `log N(F_Θ, η)` (sup-norm covering over inputs).
///
/// Appendix grouping with `C = 4q + 6`:
/// `2p log(1 + C K_1/η) + (q−1)p(p+1) log(1 + C K_2 √p/η) + dp(2+p) log(1 + C K_2 √(dp)/η)`.
pub fn covering_number_log(
    space: &ParamSpace,
    input: InputKind,
    eta: f64,
    variant: CapacityVariant,
) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::validation(format!("eta must be positive, got {eta}")));
    }
    let Capacity { k1, k2, .. } = capacity(space, input);
    let (q, p, d) = dims(space);
    let term = |exponent: f64, x: f64| if exponent == 0.0 { 0.0 } else { exponent * x.ln_1p() };
    Ok(match variant {
        CapacityVariant::Appendix => {
            let c = 4.0 * q + 6.0;
            term(2.0 * p, c * k1 / eta)
                + term((q - 1.0) * p * (p + 1.0), c * k2 * p.sqrt() / eta)
                + term(d * p * (2.0 + p), c * k2 * (d * p).sqrt() / eta)
        }
        CapacityVariant::MainText => {
            let half_c = (8.0 * q + 12.0) / 2.0;
            term((q + 1.0) * p * (1.0 + p), half_c * k1 * p.sqrt() / eta)
                + term(2.0 * d * p, half_c * k2 * (p.sqrt() + d.sqrt()) / eta)
                + term(d * p * p, half_c * k1 * (d * p).sqrt() / eta)
        }
    })
}

/// `Σ_i e_i U_i` inside the square root of the Rademacher and
/// generalization bounds, with `U_1 = log(C_q √n K_1)`,
/// `U_2 = log(C_q √(np) K_2)`, `U_3 = log(C_q √(ndp) K_2)`, `C_q = 8q + 12`.
fn complexity_sum(space: &ParamSpace, cap: &Capacity, n: usize, variant: CapacityVariant) -> Result<f64> {
    if n == 0 {
        return Err(Error::validation("sample size must be at least 1"));
    }
    let (q, p, d) = dims(space);
    let nf = n as f64;
    let cq = 8.0 * q + 12.0;
    let args = [
        cq * nf.sqrt() * cap.k1,
        cq * (nf * p).sqrt() * cap.k2,
        cq * (nf * d * p).sqrt() * cap.k2,
    ];
    let exps = match variant {
        CapacityVariant::Appendix => [2.0 * p, (q - 1.0) * p * (p + 1.0), d * p * (2.0 + p)],
        CapacityVariant::MainText => [(q + 1.0) * p * (p + 1.0), 2.0 * d * p, d * p * p],
    };
    let mut sum = 0.0;
    for (i, (&e, &a)) in exps.iter().zip(&args).enumerate() {
        if e == 0.0 {
            continue;
        }
        if !(a > 1.0) {
            return Err(Error::Domain(format!(
                "log argument U_{} = log({a}) is not positive; increase n or the norm bounds",
                i + 1
            )));
        }
        sum += e * a.ln();
    }
    Ok(sum)
}

/// Rademacher-complexity bound `4/n + (24 M/√n) √(Σ e_i U_i)`, with
/// `M = M_Θ` for continuous inputs and `M_Θ^D` on a grid.
pub fn rademacher_bound(
    space: &ParamSpace,
    input: InputKind,
    n: usize,
    variant: CapacityVariant,
) -> Result<f64> {
    let cap = capacity(space, input);
    let sum = complexity_sum(space, &cap, n, variant)?;
    let nf = n as f64;
    Ok(4.0 / nf + 24.0 * cap.m / nf.sqrt() * sum.sqrt())
}

/// Generalization bound holding with probability `1 − δ`:
/// `(24 M^D L_ℓ/√n) √(Σ e_i U_i^D) + M_ℓ √(log(1/δ)/(2n))`.
pub fn generalization_bound(
    space: &ParamSpace,
    grid: &GridSpec,
    n: usize,
    delta: f64,
    loss: &LossSpec,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::validation(format!("delta must lie in (0, 1), got {delta}")));
    }
    let cap = capacity(space, InputKind::Discrete(*grid));
    let sum = complexity_sum(space, &cap, n, CapacityVariant::Appendix)?;
    let nf = n as f64;
    let complexity = if cap.m == 0.0 || loss.lipschitz_const == 0.0 {
        0.0
    } else {
        24.0 * cap.m * loss.lipschitz_const / nf.sqrt() * sum.sqrt()
    };
    Ok(complexity + loss.sup_bound * ((1.0 / delta).ln() / (2.0 * nf)).sqrt())
}
