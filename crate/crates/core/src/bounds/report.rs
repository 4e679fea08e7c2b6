//! Named bound evaluations for auditing and CSV export.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::*;
use crate::error::Result;
use crate::training::{LossKind, LossSpec};

/// One evaluated constant or bound with the inputs it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    pub inputs: BTreeMap<String, f64>,
    pub formula_ref: String,
    /// Set when the value overflowed to `+∞`.
    pub overflow: bool,
}

impl BoundReport {
    pub fn new(name: &str, value: f64, inputs: &[(&str, f64)], formula: &str) -> Self {
        BoundReport {
            name: name.to_string(),
            value,
            inputs: inputs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            formula_ref: formula.to_string(),
            overflow: value.is_infinite(),
        }
    }
}

/// Everything needed to evaluate the full table of bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsRequest {
    pub space: ParamSpace,
    pub grid: GridSpec,
    /// Sample size for the capacity terms.
    pub n: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub loss: LossKind,
    /// Outcome bound for the squared loss when no teacher is given.
    #[serde(default)]
    pub b_y: Option<f64>,
    #[serde(default)]
    pub teacher: Option<TeacherSpec>,
    #[serde(default)]
    pub gaps: Option<GapEstimates>,
}

fn default_delta() -> f64 {
    0.05
}

impl BoundsRequest {
    pub fn reference() -> Self {
        BoundsRequest {
            space: ParamSpace::reference(),
            grid: GridSpec::uniform(100).expect("valid grid"),
            n: 10_000,
            delta: default_delta(),
            loss: LossKind::SquaredError,
            b_y: Some(1.0),
            teacher: None,
            gaps: None,
        }
    }

    /// Loss constants on the prediction range `[−M_Θ^D, M_Θ^D]`.
    pub fn loss_spec(&self) -> LossSpec {
        let m = m_theta(&self.space).max(m_theta_d(&self.space, &self.grid));
        match self.loss {
            LossKind::SquaredError => {
                let b_y = match (self.b_y, &self.teacher) {
                    (Some(b), _) => b,
                    (None, Some(t)) => outcome_bound(t, self.space.b_phi, self.space.l_x),
                    (None, None) => m,
                };
                LossSpec::squared_error(m, b_y)
            }
            LossKind::BinaryCrossEntropyWithLogit => LossSpec::bce_with_logit(m),
        }
    }
}

fn space_inputs(s: &ParamSpace) -> Vec<(&'static str, f64)> {
    vec![
        ("B_A", s.b_a),
        ("B_b", s.b_b),
        ("B_U", s.b_u),
        ("B_v", s.b_v),
        ("B_Phi", s.b_phi),
        ("q", s.q as f64),
        ("p", s.p as f64),
        ("d", s.d as f64),
        ("L_sigma", s.l_sigma),
        ("L_x", s.l_x),
        ("B_x", s.b_x),
    ]
}

/// Evaluates every bound for a request.
pub fn bound_table(req: &BoundsRequest) -> Result<Vec<BoundReport>> {
    let s = &req.space;
    s.validate()?;
    req.grid.validate()?;
    let g = &req.grid;
    let base = space_inputs(s);
    let with = |extra: &[(&'static str, f64)]| {
        let mut v = base.clone();
        v.extend_from_slice(extra);
        v
    };
    let grid_in = [("mesh", g.mesh), ("K", g.n_intervals as f64)];
    let loss = req.loss_spec();
    let mut out = Vec::new();

    out.push(BoundReport::new("kappa0", kappa0(s), &base, "L_sigma B_b sum_{j<q} (L_sigma B_A)^j"));
    let m = m_theta(s);
    let md = m_theta_d(s, g);
    out.push(BoundReport::new(
        "m_theta",
        m,
        &base,
        "B_Phi L_sigma exp((L_sigma B_A)^q L_x)(B_U B_x + B_v + kappa0 L_x)",
    ));
    out.push(BoundReport::new(
        "m_theta_d",
        md,
        &with(&grid_in),
        "B_Phi L_sigma (1 + (L_sigma B_A)^q L_x |D|)^K (B_U B_x + B_v + kappa0 L_x)",
    ));

    let lip = parameter_lipschitz_constants(s);
    let lip_d = parameter_lipschitz_constants_discrete(s, g);
    let radius = [("omega_radius", lip.omega_radius)];
    out.push(BoundReport::new(
        "c_a",
        lip.c_a,
        &with(&radius),
        "B_Phi L_x exp((L_sigma B_A)^q L_x) max_{j, |z|<=r} C_A^j(z)",
    ));
    out.push(BoundReport::new(
        "c_b",
        lip.c_b,
        &base,
        "B_Phi L_x exp((L_sigma B_A)^q L_x) max_j (L_sigma B_A)^{q-j} L_sigma",
    ));
    out.push(BoundReport::new("c_u", lip.c_u, &base, "B_Phi B_x exp(L_sigma B_A L_x) L_sigma"));
    out.push(BoundReport::new("c_v", lip.c_v, &base, "B_Phi exp(L_sigma B_A L_x) L_sigma"));
    out.push(BoundReport::new(
        "c_a_d",
        lip_d.c_a,
        &with(&[("omega_radius", lip_d.omega_radius), grid_in[0], grid_in[1]]),
        "c_a with Omega radius M_theta_d / B_Phi",
    ));

    let (k1, k2) = capacity::capacity_constants(s, InputKind::Continuous);
    out.push(BoundReport::new("k1", k1, &base, "max{B_Phi M_theta, B_v C_v}"));
    out.push(BoundReport::new("k2", k2, &base, "max{B_b C_b, B_A C_A, B_U C_U}"));
    let (k1d, k2d) = capacity::capacity_constants(s, InputKind::Discrete(*g));
    out.push(BoundReport::new("k1_d", k1d, &with(&grid_in), "max{B_Phi M_theta_d, B_v C_v}"));
    out.push(BoundReport::new("k2_d", k2d, &with(&grid_in), "max{B_b C_b, B_A C_A_d, B_U C_U}"));

    let n = req.n;
    let nf = n as f64;
    let eta = 1.0 / nf.sqrt();
    out.push(BoundReport::new(
        "covering_log",
        covering_number_log(s, InputKind::Discrete(*g), eta, CapacityVariant::Appendix)?,
        &with(&[("eta", eta), grid_in[0], grid_in[1]]),
        "2p log(1+C K1/eta) + (q-1)p(p+1) log(1+C K2 sqrt(p)/eta) + dp(2+p) log(1+C K2 sqrt(dp)/eta), C=4q+6",
    ));
    let rad_formula = "4/n + 24 M/sqrt(n) sqrt(2p U1 + (q-1)p(p+1) U2 + dp(2+p) U3), C_q=8q+12";
    let rad = rademacher_bound(s, InputKind::Continuous, n, CapacityVariant::Appendix)?;
    let rad_d = rademacher_bound(s, InputKind::Discrete(*g), n, CapacityVariant::Appendix)?;
    out.push(BoundReport::new("rademacher", rad, &with(&[("n", nf)]), rad_formula));
    out.push(BoundReport::new(
        "rademacher_d",
        rad_d,
        &with(&[("n", nf), grid_in[0], grid_in[1]]),
        rad_formula,
    ));
    out.push(BoundReport::new(
        "rademacher_d_main_text",
        rademacher_bound(s, InputKind::Discrete(*g), n, CapacityVariant::MainText)?,
        &with(&[("n", nf), grid_in[0], grid_in[1]]),
        "4/n + 24 M/sqrt(n) sqrt((q+1)p(p+1) U1 + 2dp U2 + dp^2 U3)",
    ));
    let loss_in = [
        ("n", nf),
        ("delta", req.delta),
        ("L_loss", loss.lipschitz_const),
        ("M_loss", loss.sup_bound),
        grid_in[0],
        grid_in[1],
    ];
    out.push(BoundReport::new(
        "generalization",
        generalization_bound(s, g, n, req.delta, &loss)?,
        &with(&loss_in),
        "24 M_d L_loss/sqrt(n) sqrt(2p U1 + (q-1)p(p+1) U2 + dp(2+p) U3) + M_loss sqrt(log(1/delta)/(2n))",
    ));

    let m_min = m.min(md);
    let disc = discretization_bias_bound(s, loss.lipschitz_const, m_min, g.mesh);
    out.push(BoundReport::new(
        "discretization_bias",
        disc,
        &with(&[("L_loss", loss.lipschitz_const), ("m", m_min), grid_in[0]]),
        "L_loss B_Phi exp(L L_x) L_x [max(1, L m/B_Phi + kappa0) + L (L m/B_Phi + kappa0) L_x] |D|, L=(L_sigma B_A)^q",
    ));

    if let Some(t) = &req.teacher {
        t.validate()?;
        out.push(BoundReport::new(
            "outcome_bound",
            outcome_bound(t, s.b_phi, s.l_x),
            &[
                ("B_Phi", s.b_phi),
                ("L_x", s.l_x),
                ("L_Gstar", t.lipschitz_gstar),
                ("Gstar0", t.gstar_at_zero_opnorm),
                ("B_phistar", t.b_phistar),
                ("M_eps", t.noise_bound),
            ],
            "B_Phi (B_phistar + |G*(0)| L_x) exp(L_G* L_x) + M_eps",
        ));
        if let Some(gaps) = &req.gaps {
            let risk = total_risk_bound(s, g, n, loss.lipschitz_const, t, gaps)?;
            let gap_in = [
                ("field_gap", gaps.field_gap),
                ("init_gap", gaps.init_gap),
                ("phi_gap", gaps.phi_gap),
                ("L_loss", loss.lipschitz_const),
            ];
            out.push(BoundReport::new(
                "approximation_bias",
                risk.approximation,
                &with(&gap_in),
                "L_loss B_Phi exp(L_G* L_x)(L_x field_gap + init_gap) + L_loss M_theta/B_Phi phi_gap",
            ));
            out.push(BoundReport::new(
                "total_risk_complexity",
                risk.complexity,
                &with(&[("n", nf)]),
                "4 max{rademacher, rademacher_d}",
            ));
            out.push(BoundReport::new(
                "total_risk",
                risk.total,
                &with(&gap_in),
                "complexity + discretization_bias + approximation_bias",
            ));
        }
    }
    Ok(out)
}

/// Writes reports as CSV with columns `name,value,inputs_json,formula_ref`.
pub fn write_reports_csv<W: Write>(writer: W, reports: &[BoundReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["name", "value", "inputs_json", "formula_ref"])?;
    for r in reports {
        w.write_record([
            r.name.as_str(),
            &r.value.to_string(),
            &serde_json::to_string(&r.inputs)?,
            r.formula_ref.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
