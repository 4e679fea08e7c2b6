//! Latent trajectories under linear interpolation of the vector field, of
//! the initial condition, or of the driving path.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::teacher_student::fbm_dataset;
use super::{check, fmt, tag, ArtifactSink, InitScheme};
use crate::bounds::flow_continuity_bound;
use crate::error::Result;
use crate::linalg::distance;
use crate::model::{forward, Activation, Dims, ModelParams, ParamGroup};
use crate::paths::SampledPath;
use crate::rng::{derive_seed, stream_rng};
use crate::verify::{flow_inputs, FlowFamily, SLACK};

fn d_channels() -> usize {
    2
}
fn d_points() -> usize {
    100
}
fn d_hurst() -> f64 {
    0.5
}
fn d_p() -> usize {
    2
}
fn d_q() -> usize {
    1
}
fn d_act() -> Activation {
    Activation::Tanh
}
fn d_init() -> InitScheme {
    InitScheme::NormalFanIn
}
fn d_deltas() -> usize {
    11
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_channels")]
    pub channels: usize,
    #[serde(default = "d_points")]
    pub n_points: usize,
    #[serde(default = "d_hurst")]
    pub hurst: f64,
    #[serde(default)]
    pub time_channel: bool,
    #[serde(default = "d_p")]
    pub p: usize,
    #[serde(default = "d_q")]
    pub q: usize,
    #[serde(default = "d_act")]
    pub activation: Activation,
    #[serde(default = "d_init")]
    pub init: InitScheme,
    /// Number of equispaced δ values in [0, 1], endpoints included.
    #[serde(default = "d_deltas")]
    pub n_deltas: usize,
    /// Use the same model and path for both endpoints.
    #[serde(default)]
    pub identical_endpoints: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.channels >= 1, "channels must be at least 1")?;
        check(self.n_points >= 2, "n_points must be at least 2")?;
        check(self.hurst > 0.0 && self.hurst < 1.0, "hurst must lie in (0, 1)")?;
        check(self.p >= 1 && self.q >= 1, "p and q must be at least 1")?;
        check(self.n_deltas >= 2, "n_deltas must be at least 2")
    }

    pub fn dims(&self) -> Dims {
        Dims {
            q: self.q,
            p: self.p,
            d: self.channels + usize::from(self.time_channel),
        }
    }

    pub fn deltas(&self) -> Vec<f64> {
        let m = (self.n_deltas - 1) as f64;
        (0..self.n_deltas).map(|i| i as f64 / m).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub family: FlowFamily,
    /// Largest gap between terminal states at adjacent δ.
    pub max_adjacent_gap: f64,
    /// Largest adjacent gap divided by its flow-continuity bound.
    pub max_ratio: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub families: Vec<FamilySummary>,
}

/// `δ·a + (1 − δ)·b` on the vector-field groups, `a` elsewhere.
fn interpolate_field(a: &ModelParams, b: &ModelParams, delta: f64) -> ModelParams {
    let mut out = a.clone();
    for (g, _) in ModelParams::group_ranges(a.dims()) {
        if matches!(g, ParamGroup::Weight(_) | ParamGroup::Bias(_)) {
            let other = b.group(g).to_vec();
            for (x, o) in out.group_mut(g).iter_mut().zip(other) {
                *x = crate::linalg::lerp(*x, o, delta);
            }
        }
    }
    out
}

/// The model and driving path at interpolation weight `delta`.
fn instance(
    family: FlowFamily,
    delta: f64,
    models: (&ModelParams, &ModelParams),
    paths: (&SampledPath, &SampledPath),
    second_start: &[f64],
) -> Result<(ModelParams, SampledPath)> {
    let (m1, m2) = models;
    let (x1, x2) = paths;
    Ok(match family {
        FlowFamily::Field => (interpolate_field(m1, m2, delta), x1.clone()),
        FlowFamily::Init => {
            let offset: Vec<f64> = x1
                .initial()
                .iter()
                .zip(second_start)
                .map(|(a, b)| (1.0 - delta) * (b - a))
                .collect();
            (m1.clone(), x1.shifted(&offset)?)
        }
        FlowFamily::Path => (m1.clone(), x1.interpolate(x2, delta)?),
        FlowFamily::Mixed => (interpolate_field(m1, m2, delta), x1.interpolate(x2, delta)?),
    })
}

pub fn run_flow_interpolation(cfg: &FlowConfig, sink: &mut ArtifactSink) -> Result<FlowSummary> {
    cfg.validate()?;
    let dims = cfg.dims();
    let mut rng = stream_rng(derive_seed(cfg.seed, tag::MODEL), 0);
    let m1 = cfg.init.sample(dims, cfg.activation, &mut rng);
    let m2 = if cfg.identical_endpoints {
        m1.clone()
    } else {
        cfg.init.sample(dims, cfg.activation, &mut rng)
    };
    let paths = fbm_dataset(
        2,
        cfg.channels,
        cfg.n_points,
        cfg.hurst,
        cfg.time_channel,
        derive_seed(cfg.seed, tag::DATA),
    )?;
    let x1 = &paths[0];
    let x2 = if cfg.identical_endpoints { &paths[0] } else { &paths[1] };
    // fBM starts at the origin, so the second initial condition is drawn
    // separately.
    let second_start: Vec<f64> = if cfg.identical_endpoints {
        x1.initial().to_vec()
    } else {
        (0..dims.d).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
    };
    let deltas = cfg.deltas();
    let seed = cfg.seed.to_string();

    let mut traj_rows = Vec::new();
    let mut gap_rows = Vec::new();
    let mut families = Vec::new();
    for family in [FlowFamily::Field, FlowFamily::Init, FlowFamily::Path] {
        let instances: Vec<(ModelParams, SampledPath)> = deltas
            .iter()
            .map(|&d| instance(family, d, (&m1, &m2), (x1, x2), &second_start))
            .collect::<Result<_>>()?;
        let terminals: Vec<Vec<f64>> = instances
            .iter()
            .map(|(m, x)| forward(m, x).map(|t| t.terminal().to_vec()))
            .collect::<Result<_>>()?;
        let mut summary = FamilySummary {
            family,
            max_adjacent_gap: 0.0,
            max_ratio: 0.0,
            violations: 0,
        };
        for (i, ((m, x), &delta)) in instances.iter().zip(&deltas).enumerate() {
            let traj = forward(m, x)?;
            for k in 0..traj.states.rows() {
                let mut row = vec![family.name().to_string(), fmt(delta), k.to_string(), fmt(x.times()[k])];
                row.extend(traj.states.row(k).iter().map(|v| fmt(*v)));
                row.push(seed.clone());
                traj_rows.push(row);
            }
            let (adjacent_gap, bound) = if i == 0 {
                (0.0, 0.0)
            } else {
                let (prev_m, prev_x) = &instances[i - 1];
                let (inputs, gap) = flow_inputs(prev_m, prev_x, m, x)?;
                (gap, flow_continuity_bound(&inputs).value)
            };
            summary.max_adjacent_gap = summary.max_adjacent_gap.max(adjacent_gap);
            if adjacent_gap > 0.0 {
                summary.max_ratio = summary.max_ratio.max(adjacent_gap / bound);
            }
            if adjacent_gap > bound + SLACK {
                summary.violations += 1;
            }
            gap_rows.push(vec![
                family.name().to_string(),
                fmt(delta),
                fmt(distance(&terminals[i], &terminals[0])),
                fmt(adjacent_gap),
                fmt(bound),
                seed.clone(),
            ]);
        }
        families.push(summary);
    }
    let mut header: Vec<String> = ["family", "delta", "k", "t"].iter().map(|s| s.to_string()).collect();
    header.extend((0..dims.p).map(|j| format!("z{j}")));
    header.push("seed".into());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    sink.write_csv("trajectories.csv", &header_refs, &traj_rows)?;
    sink.write_csv(
        "endpoint_gaps.csv",
        &["family", "delta", "terminal_gap_from_delta0", "adjacent_gap", "adjacent_bound", "seed"],
        &gap_rows,
    )?;
    Ok(FlowSummary { families })
}
