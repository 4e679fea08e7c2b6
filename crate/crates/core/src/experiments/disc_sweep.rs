//! Discretization sweep: empirical prediction gaps between coarse and fine
//! samplings against the linear-in-mesh bound, and convergence of the
//! discrete output bound to the continuous one.

use serde::{Deserialize, Serialize};

use super::{check, fmt, tag, ArtifactSink};
use crate::bounds::{m_theta, m_theta_d, GridSpec, ParamSpace};
use crate::error::Result;
use crate::model::Activation;
use crate::paths::SamplingGrid;
use crate::rng::{derive_seed, stream_rng};
use crate::verify::{check_discretization_scaling, random_piecewise_linear_path_on, sample_params_in, DiscretizationTable};

fn d_space() -> ParamSpace {
    ParamSpace::reference()
}
fn d_act() -> Activation {
    Activation::Tanh
}
fn d_paths() -> usize {
    20
}
fn d_fine() -> usize {
    crate::paths::DEFAULT_FINE_INTERVALS
}
fn d_pieces() -> usize {
    8
}
fn d_ladder() -> Vec<usize> {
    vec![4, 8, 16, 32, 64, 128, 256, 512]
}
fn d_m_ladder() -> Vec<usize> {
    vec![100, 1_000, 10_000, 100_000]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscSweepConfig {
    #[serde(default)]
    pub seed: u64,
    /// Θ and the path constants; the model is drawn inside it.
    #[serde(default = "d_space")]
    pub space: ParamSpace,
    #[serde(default = "d_act")]
    pub activation: Activation,
    #[serde(default = "d_paths")]
    pub n_paths: usize,
    #[serde(default = "d_fine")]
    pub fine_intervals: usize,
    /// Linear pieces of each random Lipschitz path.
    #[serde(default = "d_pieces")]
    pub pieces: usize,
    /// Coarse interval counts.
    #[serde(default = "d_ladder")]
    pub ladder: Vec<usize>,
    /// Interval counts of the uniform grids for the output-bound table.
    #[serde(default = "d_m_ladder")]
    pub m_theta_ladder: Vec<usize>,
}

impl Default for DiscSweepConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl DiscSweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        check(self.n_paths >= 1, "n_paths must be at least 1")?;
        check(self.pieces >= 1, "pieces must be at least 1")?;
        check(self.fine_intervals >= 1, "fine_intervals must be at least 1")?;
        check(!self.ladder.is_empty(), "ladder must not be empty")?;
        check(
            self.ladder.iter().all(|&k| k >= 1 && k <= self.fine_intervals),
            "ladder entries must lie in 1..=fine_intervals",
        )?;
        check(self.m_theta_ladder.iter().all(|&k| k >= 1), "m_theta_ladder entries must be at least 1")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MThetaRow {
    pub k: usize,
    pub m_theta_d: f64,
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscSweepSummary {
    pub table: DiscretizationTable,
    pub m_theta: f64,
    pub m_theta_rows: Vec<MThetaRow>,
}

pub fn run_discretization_sweep(cfg: &DiscSweepConfig, sink: &mut ArtifactSink) -> Result<DiscSweepSummary> {
    cfg.validate()?;
    let space = &cfg.space;
    let model = sample_params_in(space, cfg.activation, &mut stream_rng(derive_seed(cfg.seed, tag::MODEL), 0));
    sink.write("model.json", model.to_json()?.as_bytes())?;
    let grid = SamplingGrid::uniform(cfg.fine_intervals)?;
    let data_seed = derive_seed(cfg.seed, tag::DATA);
    let paths: Vec<_> = (0..cfg.n_paths)
        .map(|i| {
            let mut rng = stream_rng(data_seed, i as u64);
            random_piecewise_linear_path_on(&grid, space.d, space.l_x, space.b_x, cfg.pieces, &mut rng)
        })
        .collect();
    let table = check_discretization_scaling(space, &model, &paths, &cfg.ladder)?;
    let seed = cfg.seed.to_string();
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.k.to_string(),
                fmt(r.mesh),
                fmt(r.mean_gap),
                fmt(r.max_gap),
                fmt(r.bound),
                fmt(r.max_ratio),
                r.violations.to_string(),
                seed.clone(),
            ]
        })
        .collect();
    sink.write_csv(
        "discretization.csv",
        &["k", "mesh", "mean_gap", "max_gap", "bound", "max_ratio", "violations", "seed"],
        &rows,
    )?;

    let m = m_theta(space);
    let mut m_rows = Vec::new();
    for &k in &cfg.m_theta_ladder {
        let md = m_theta_d(space, &GridSpec::uniform(k)?);
        m_rows.push(MThetaRow {
            k,
            m_theta_d: md,
            relative_gap: if m > 0.0 { (md - m).abs() / m } else { 0.0 },
        });
    }
    let csv_rows: Vec<Vec<String>> = m_rows
        .iter()
        .map(|r| vec![r.k.to_string(), fmt(1.0 / r.k as f64), fmt(r.m_theta_d), fmt(m), fmt(r.relative_gap), seed.clone()])
        .collect();
    sink.write_csv(
        "m_theta_convergence.csv",
        &["k", "mesh", "m_theta_d", "m_theta", "relative_gap", "seed"],
        &csv_rows,
    )?;
    Ok(DiscSweepSummary {
        table,
        m_theta: m,
        m_theta_rows: m_rows,
    })
}
