//! Rough-vs-smooth fBM classification under random downsampling: many short
//! training runs, each on its own random sampling grid, relating the
//! generalization gap to the mesh and to the average maximal increment.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::teacher_student::fbm_dataset;
use super::{check, fmt, spearman, spearman_one_sided_p, tag, ArtifactSink, InitScheme};
use crate::error::Result;
use crate::model::{predict, Activation, Dims, ModelParams};
use crate::paths::{path_stats, random_subgrid_indices, SampledPath};
use crate::rng::derive_seed;
use crate::training::{
    empirical_risk, train_erm, FreezeGroup, LossKind, LossSpec, TrainConfig,
};

fn d_channels() -> usize {
    2
}
fn d_hurst() -> [f64; 2] {
    [0.4, 0.6]
}
fn d_points() -> usize {
    200
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
fn d_n() -> usize {
    50
}
fn d_k() -> usize {
    5
}
fn d_runs() -> usize {
    50
}
fn d_lr() -> f64 {
    1e-4
}
fn d_iters() -> usize {
    600
}
fn d_init() -> InitScheme {
    InitScheme::UniformFanIn
}
fn d_freeze() -> Vec<FreezeGroup> {
    vec![FreezeGroup::Phi, FreezeGroup::Init]
}
fn d_true_resample() -> bool {
    true
}
fn d_single() -> Option<SingleModelConfig> {
    Some(SingleModelConfig::default())
}
fn d_single_n_train() -> usize {
    100
}
fn d_single_lr() -> f64 {
    5e-2
}
fn d_single_iters() -> usize {
    100
}

/// One classifier trained on fully sampled paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleModelConfig {
    #[serde(default = "d_single_n_train")]
    pub n_train: usize,
    #[serde(default = "d_n")]
    pub n_test: usize,
    #[serde(default = "d_single_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_single_iters")]
    pub iterations: usize,
}

impl Default for SingleModelConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoughSmoothConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_channels")]
    pub channels: usize,
    /// Hurst exponents of class 0 and class 1.
    #[serde(default = "d_hurst")]
    pub hurst: [f64; 2],
    /// Points of the full equispaced grid on [0, 1].
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
    #[serde(default = "d_n")]
    pub n_train: usize,
    #[serde(default = "d_n")]
    pub n_test: usize,
    /// Sampling points kept per run, endpoints included.
    #[serde(default = "d_k")]
    pub k_points: usize,
    #[serde(default = "d_runs")]
    pub runs: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_iters")]
    pub iterations: usize,
    /// Initialization shared by every run.
    #[serde(default = "d_init")]
    pub init: InitScheme,
    #[serde(default = "d_freeze")]
    pub freeze: Vec<FreezeGroup>,
    /// Draw fresh train and test series for every run; when false, one fixed
    /// sample is downsampled differently in each run.
    #[serde(default = "d_true_resample")]
    pub resample_data: bool,
    #[serde(default = "d_single")]
    pub single_model: Option<SingleModelConfig>,
}

impl Default for RoughSmoothConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RoughSmoothConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.channels >= 1, "channels must be at least 1")?;
        check(
            self.hurst.iter().all(|h| *h > 0.0 && *h < 1.0),
            "hurst exponents must lie in (0, 1)",
        )?;
        check(self.n_points >= 2, "n_points must be at least 2")?;
        check(self.p >= 1 && self.q >= 1, "p and q must be at least 1")?;
        check(self.n_train >= 2 && self.n_test >= 2, "n_train and n_test must be at least 2")?;
        check(
            self.k_points >= 2 && self.k_points <= self.n_points,
            "k_points must lie in 2..=n_points",
        )?;
        check(self.runs >= 1, "runs must be at least 1")?;
        check(self.learning_rate > 0.0 && self.learning_rate.is_finite(), "learning_rate must be positive")?;
        check(self.iterations >= 1, "iterations must be at least 1")?;
        if let Some(s) = &self.single_model {
            check(s.n_train >= 2 && s.n_test >= 2, "single_model sizes must be at least 2")?;
            check(s.learning_rate > 0.0 && s.learning_rate.is_finite(), "single_model learning_rate must be positive")?;
            check(s.iterations >= 1, "single_model iterations must be at least 1")?;
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        Dims {
            q: self.q,
            p: self.p,
            d: self.channels + usize::from(self.time_channel),
        }
    }

    fn train_config(&self, lr: f64, iterations: usize) -> TrainConfig {
        let mut tc = TrainConfig::new(lr, iterations);
        tc.freeze = self.freeze.iter().copied().collect();
        tc.seed = self.seed;
        tc
    }
}

/// Spearman correlation of the generalization gap with one run statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub variable: String,
    /// `None` when undefined (a constant column).
    pub rho: Option<f64>,
    /// One-sided p-value for a positive correlation.
    pub p_value: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub run: usize,
    pub mesh: f64,
    pub avg_max_variation: f64,
    pub train_risk: f64,
    pub test_risk: f64,
    /// `|test_risk − train_risk|`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughSmoothSummary {
    pub runs: Vec<RunStats>,
    pub correlations: Vec<Correlation>,
    pub single_model_test_accuracy: Option<f64>,
}

/// Balanced labelled sample: the first half from class 0.
fn labelled(cfg: &RoughSmoothConfig, n: usize, seed: u64) -> Result<Vec<(SampledPath, f64)>> {
    let n0 = n / 2;
    let mut out = Vec::with_capacity(n);
    for (class, count) in [(0usize, n0), (1, n - n0)] {
        if count == 0 {
            continue;
        }
        let paths = fbm_dataset(
            count,
            cfg.channels,
            cfg.n_points,
            cfg.hurst[class],
            cfg.time_channel,
            derive_seed(seed, class as u64),
        )?;
        out.extend(paths.into_iter().map(|p| (p, class as f64)));
    }
    Ok(out)
}

fn restrict_all(data: &[(SampledPath, f64)], idx: &[usize]) -> Result<Vec<(SampledPath, f64)>> {
    data.iter().map(|(p, y)| Ok((p.restrict(idx)?, *y))).collect()
}

fn correlation(variable: &str, x: &[f64], gap: &[f64]) -> Correlation {
    let rho = spearman(x, gap);
    Correlation {
        variable: variable.to_string(),
        rho,
        p_value: rho.map(|r| spearman_one_sided_p(r, x.len())),
        n: x.len(),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_else(|| "NA".to_string())
}

pub fn run_rough_smooth(cfg: &RoughSmoothConfig, sink: &mut ArtifactSink) -> Result<RoughSmoothSummary> {
    cfg.validate()?;
    let dims = cfg.dims();
    let base: ModelParams = cfg
        .init
        .sample(dims, cfg.activation, &mut crate::rng::stream_rng(derive_seed(cfg.seed, tag::MODEL), 0));
    sink.write("base_model.json", base.to_json()?.as_bytes())?;
    let spec = LossSpec::of_kind(LossKind::BinaryCrossEntropyWithLogit);
    let run_seed = derive_seed(cfg.seed, tag::RUNS);
    let shared = if cfg.resample_data {
        None
    } else {
        Some((
            labelled(cfg, cfg.n_train, derive_seed(cfg.seed, tag::DATA))?,
            labelled(cfg, cfg.n_test, derive_seed(cfg.seed, tag::TEST_DATA))?,
        ))
    };

    let stats: Vec<RunStats> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(run_seed, r as u64);
            let idx = random_subgrid_indices(cfg.n_points, cfg.k_points, derive_seed(seed, tag::STUDENT))?;
            let (train, test) = match &shared {
                Some((train, test)) => (restrict_all(train, &idx)?, restrict_all(test, &idx)?),
                None => {
                    let train = labelled(cfg, cfg.n_train, derive_seed(seed, tag::DATA))?;
                    let test = labelled(cfg, cfg.n_test, derive_seed(seed, tag::TEST_DATA))?;
                    (restrict_all(&train, &idx)?, restrict_all(&test, &idx)?)
                }
            };
            let mesh = train[0].0.grid().mesh();
            let avg_max_variation =
                train.iter().map(|(p, _)| path_stats(p).max_increment).sum::<f64>() / train.len() as f64;
            let (model, _) = train_erm(&train, &base, &spec, &cfg.train_config(cfg.learning_rate, cfg.iterations))?;
            let train_risk = empirical_risk(&model, &train, &spec)?;
            let test_risk = empirical_risk(&model, &test, &spec)?;
            Ok(RunStats {
                run: r,
                mesh,
                avg_max_variation,
                train_risk,
                test_risk,
                gap: (test_risk - train_risk).abs(),
            })
        })
        .collect::<Result<_>>()?;

    let rows: Vec<Vec<String>> = stats
        .iter()
        .map(|s| {
            vec![
                s.run.to_string(),
                fmt(s.mesh),
                fmt(s.avg_max_variation),
                fmt(s.train_risk),
                fmt(s.test_risk),
                fmt(s.gap),
                cfg.seed.to_string(),
            ]
        })
        .collect();
    sink.write_csv(
        "runs.csv",
        &["run", "mesh", "avg_max_variation", "train_risk", "test_risk", "gap", "seed"],
        &rows,
    )?;

    let gaps: Vec<f64> = stats.iter().map(|s| s.gap).collect();
    let correlations = vec![
        correlation("mesh", &stats.iter().map(|s| s.mesh).collect::<Vec<_>>(), &gaps),
        correlation(
            "avg_max_variation",
            &stats.iter().map(|s| s.avg_max_variation).collect::<Vec<_>>(),
            &gaps,
        ),
    ];
    let corr_rows: Vec<Vec<String>> = correlations
        .iter()
        .map(|c| {
            vec![
                c.variable.clone(),
                opt(c.rho),
                opt(c.p_value),
                c.n.to_string(),
                c.rho.is_some().to_string(),
                cfg.seed.to_string(),
            ]
        })
        .collect();
    sink.write_csv(
        "correlations.csv",
        &["variable", "spearman", "p_value_one_sided", "n_runs", "applicable", "seed"],
        &corr_rows,
    )?;

    let single_model_test_accuracy = match &cfg.single_model {
        Some(s) => Some(single_model(cfg, s, &base, &spec, sink)?),
        None => None,
    };
    Ok(RoughSmoothSummary {
        runs: stats,
        correlations,
        single_model_test_accuracy,
    })
}

fn single_model(
    cfg: &RoughSmoothConfig,
    s: &SingleModelConfig,
    base: &ModelParams,
    spec: &LossSpec,
    sink: &mut ArtifactSink,
) -> Result<f64> {
    let seed = derive_seed(cfg.seed, tag::TEACHER);
    let train = labelled(cfg, s.n_train, derive_seed(seed, tag::DATA))?;
    let test = labelled(cfg, s.n_test, derive_seed(seed, tag::TEST_DATA))?;
    let mut tc = TrainConfig::new(s.learning_rate, s.iterations);
    tc.seed = cfg.seed;
    let (model, log) = train_erm(&train, base, spec, &tc)?;
    sink.write_with("single_model/train_log.csv", |buf| log.write_csv(buf, cfg.seed))?;
    let mut rows = Vec::with_capacity(test.len());
    let mut correct = 0usize;
    for (i, (path, y)) in test.iter().enumerate() {
        let logit = predict(&model, path)?;
        let prob = 1.0 / (1.0 + (-logit).exp());
        if (prob >= 0.5) == (*y == 1.0) {
            correct += 1;
        }
        rows.push(vec![i.to_string(), fmt(*y), fmt(logit), fmt(prob), cfg.seed.to_string()]);
    }
    sink.write_csv(
        "single_model/test_predictions.csv",
        &["path_id", "label", "logit", "prob", "seed"],
        &rows,
    )?;
    Ok(correct as f64 / test.len() as f64)
}
