//! Teacher–student training dynamics: a random teacher labels fBM paths, a
//! freshly initialized student of the same shape is fit by full-batch Adam,
//! and losses, parameter norms and latent trajectories are recorded.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check, fmt, tag, ArtifactSink, InitScheme};
use crate::error::Result;
use crate::model::{forward, Activation, Dims, ModelParams};
use crate::paths::io::write_paths_csv_seeded;
use crate::paths::{augment_time_channel, sample_fbm, SampledPath, SamplingGrid};
use crate::rng::{derive_seed, stream_rng};
use crate::training::{train_erm, LossKind, LossSpec, TrainConfig, TrainLog};
use crate::verify::{teacher_generate, TeacherModel};

fn d_seed() -> u64 {
    0
}
fn d_n() -> usize {
    100
}
fn d_channels() -> usize {
    4
}
fn d_hurst() -> f64 {
    0.7
}
fn d_points() -> usize {
    100
}
fn d_true() -> bool {
    true
}
fn d_p() -> usize {
    3
}
fn d_q() -> usize {
    1
}
fn d_act() -> Activation {
    Activation::Tanh
}
fn d_lr() -> f64 {
    5e-3
}
fn d_iters() -> usize {
    2000
}
fn d_repeats() -> usize {
    25
}
fn d_snapshots() -> Vec<usize> {
    vec![0, 100, 500, 2000]
}
fn d_latent_paths() -> usize {
    3
}
fn d_teacher_init() -> InitScheme {
    InitScheme::NormalFanIn
}
fn d_student_init() -> InitScheme {
    InitScheme::UniformFanIn
}
fn d_target_ratio() -> f64 {
    1e-2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherStudentConfig {
    #[serde(default = "d_seed")]
    pub seed: u64,
    /// Training sample size.
    #[serde(default = "d_n")]
    pub n: usize,
    /// fBM channels (time is appended when `time_channel` is set).
    #[serde(default = "d_channels")]
    pub channels: usize,
    #[serde(default = "d_hurst")]
    pub hurst: f64,
    /// Equispaced sampling points on [0, 1].
    #[serde(default = "d_points")]
    pub n_points: usize,
    #[serde(default = "d_true")]
    pub time_channel: bool,
    #[serde(default = "d_p")]
    pub p: usize,
    #[serde(default = "d_q")]
    pub q: usize,
    #[serde(default = "d_act")]
    pub activation: Activation,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_iters")]
    pub iterations: usize,
    /// Student initializations trained on the same data.
    #[serde(default = "d_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub noise_bound: f64,
    /// Iterations at which latent trajectories of run 0 are written.
    #[serde(default = "d_snapshots")]
    pub snapshot_iters: Vec<usize>,
    #[serde(default = "d_latent_paths")]
    pub latent_paths: usize,
    #[serde(default = "d_teacher_init")]
    pub teacher_init: InitScheme,
    #[serde(default = "d_student_init")]
    pub student_init: InitScheme,
    /// A run counts as converged when `final/initial` loss is at most this.
    #[serde(default = "d_target_ratio")]
    pub target_ratio: f64,
}

impl Default for TeacherStudentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl TeacherStudentConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.n >= 1, "n must be at least 1")?;
        check(self.channels >= 1, "channels must be at least 1")?;
        check(self.hurst > 0.0 && self.hurst < 1.0, "hurst must lie in (0, 1)")?;
        check(self.n_points >= 2, "n_points must be at least 2")?;
        check(self.p >= 1 && self.q >= 1, "p and q must be at least 1")?;
        check(self.learning_rate > 0.0 && self.learning_rate.is_finite(), "learning_rate must be positive")?;
        check(self.iterations >= 1, "iterations must be at least 1")?;
        check(self.repeats >= 1, "repeats must be at least 1")?;
        check(self.noise_bound >= 0.0, "noise_bound must be ≥ 0")?;
        check(self.latent_paths <= self.n, "latent_paths cannot exceed n")?;
        check(self.target_ratio > 0.0, "target_ratio must be positive")
    }

    pub fn dims(&self) -> Dims {
        Dims {
            q: self.q,
            p: self.p,
            d: self.channels + usize::from(self.time_channel),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherStudentSummary {
    pub runs: Vec<RunOutcome>,
    /// Runs whose final/initial loss ratio is at most `target_ratio`.
    pub converged: usize,
}

pub(crate) fn fbm_dataset(
    n: usize,
    channels: usize,
    n_points: usize,
    hurst: f64,
    time_channel: bool,
    seed: u64,
) -> Result<Vec<SampledPath>> {
    let grid = SamplingGrid::uniform_points(n_points)?;
    let paths = sample_fbm(n, channels, &grid, hurst, seed)?;
    Ok(if time_channel {
        paths.iter().map(augment_time_channel).collect()
    } else {
        paths
    })
}

pub fn run_teacher_student(cfg: &TeacherStudentConfig, sink: &mut ArtifactSink) -> Result<TeacherStudentSummary> {
    cfg.validate()?;
    let dims = cfg.dims();
    let paths = fbm_dataset(
        cfg.n,
        cfg.channels,
        cfg.n_points,
        cfg.hurst,
        cfg.time_channel,
        derive_seed(cfg.seed, tag::DATA),
    )?;
    let teacher = TeacherModel {
        params: cfg
            .teacher_init
            .sample(dims, cfg.activation, &mut stream_rng(derive_seed(cfg.seed, tag::TEACHER), 0)),
        noise_bound: cfg.noise_bound,
        noise_seed: derive_seed(cfg.seed, tag::NOISE),
    };
    let data = teacher_generate(&teacher, &paths)?;
    sink.write_with("data/paths.csv", |buf| write_paths_csv_seeded(buf, &paths, cfg.seed))?;
    let label_rows: Vec<Vec<String>> = data
        .iter()
        .enumerate()
        .map(|(i, (_, y))| vec![i.to_string(), fmt(*y), cfg.seed.to_string()])
        .collect();
    sink.write_csv("data/labels.csv", &["path_id", "y", "seed"], &label_rows)?;
    sink.write("teacher.json", teacher.params.to_json()?.as_bytes())?;

    let spec = LossSpec::of_kind(LossKind::SquaredError);
    let student_seed = derive_seed(cfg.seed, tag::STUDENT);
    let results: Vec<(ModelParams, TrainLog)> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| {
            let init = cfg.student_init.sample(dims, cfg.activation, &mut stream_rng(student_seed, r as u64));
            let mut tc = TrainConfig::new(cfg.learning_rate, cfg.iterations);
            tc.seed = cfg.seed;
            if r == 0 {
                tc.snapshot_iters = cfg.snapshot_iters.clone();
            }
            train_erm(&data, &init, &spec, &tc)
        })
        .collect::<Result<_>>()?;

    let mut outcomes = Vec::with_capacity(cfg.repeats);
    let mut run_rows = Vec::new();
    let mut norm_rows = Vec::new();
    for (r, (_, log)) in results.iter().enumerate() {
        sink.write_with(&format!("runs/run_{r:03}/train_log.csv"), |buf| log.write_csv(buf, cfg.seed))?;
        sink.write_with(&format!("runs/run_{r:03}/norms_normalized.csv"), |buf| {
            log.write_normalized_csv(buf, cfg.seed)
        })?;
        let (initial, last) = (log.initial_loss(), log.final_loss());
        let ratio = last / initial;
        run_rows.push(vec![r.to_string(), fmt(initial), fmt(last), fmt(ratio), cfg.seed.to_string()]);
        let first_rec = &log.records[0];
        let last_rec = log.records.last().expect("at least two records");
        for (j, g) in log.groups().iter().enumerate() {
            let n0 = first_rec.norms[j];
            let n1 = last_rec.norms[j];
            let normalized = if n0 == 0.0 { f64::NAN } else { n1 / n0 };
            norm_rows.push(vec![r.to_string(), g.label(), fmt(n1), fmt(normalized), cfg.seed.to_string()]);
        }
        outcomes.push(RunOutcome {
            run: r,
            initial_loss: initial,
            final_loss: last,
            ratio,
        });
    }
    sink.write_csv("runs.csv", &["run", "initial_loss", "final_loss", "ratio", "seed"], &run_rows)?;
    sink.write_csv("final_norms.csv", &["run", "group", "final_norm", "normalized", "seed"], &norm_rows)?;

    let mut latent_rows = Vec::new();
    let (_, log0) = &results[0];
    for i in 0..cfg.latent_paths {
        let path = &paths[i];
        let teacher_traj = forward(&teacher.params, path)?.readout(&teacher.params.phi);
        for snap in &log0.snapshots {
            let student = forward(&snap.params, path)?.readout(&snap.params.phi);
            for (k, (s, t)) in student.iter().zip(&teacher_traj).enumerate() {
                latent_rows.push(vec![
                    snap.iter.to_string(),
                    i.to_string(),
                    k.to_string(),
                    fmt(path.times()[k]),
                    fmt(*s),
                    fmt(*t),
                    cfg.seed.to_string(),
                ]);
            }
        }
    }
    sink.write_csv(
        "latent.csv",
        &["iter", "path_id", "k", "t", "student", "teacher", "seed"],
        &latent_rows,
    )?;
    let converged = outcomes.iter().filter(|o| o.ratio <= cfg.target_ratio).count();
    Ok(TeacherStudentSummary { runs: outcomes, converged })
}
