//! Command-line driver: data generation, training, bound tables,
//! randomized verification and the experiment suite.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ncde::bounds::{bound_table, write_reports_csv, BoundsRequest, ParamSpace};
use ncde::experiments::{
    rerun, run_experiment, DiscSweepConfig, ExperimentConfig, FlowConfig, InitScheme,
    RoughSmoothConfig, TeacherStudentConfig,
};
use ncde::model::{Activation, Dims};
use ncde::paths::io::{read_labels_csv, read_paths_csv, write_paths_csv_seeded, DatasetManifest};
use ncde::paths::{augment_time_channel, sample_fbm, SamplingGrid};
use ncde::rng::stream_rng;
use ncde::training::{train_erm, LossKind, LossSpec, TrainConfig};
use ncde::verify::{self, CheckResult};
use ncde::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_VIOLATION: u8 = 4;

#[derive(Parser)]
#[command(name = "ncde", version, about = "Neural controlled differential equations: training, bounds and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an fBM dataset.
    Generate(Common),
    /// Train a model on a path/label dataset.
    Train(Common),
    /// Evaluate every closed-form bound.
    Bounds(Common),
    /// Check the bounds on randomized instances.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Trials per check.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Comma-separated subset of: output, field, flow, param, outcome,
        /// approximation, gradients, discretization.
        #[arg(long, value_delimiter = ',')]
        checks: Option<Vec<String>>,
    },
    /// Run an experiment.
    Exp {
        #[command(subcommand)]
        which: Experiment,
    },
    /// Re-run an experiment from its manifest and compare artifacts.
    Rerun {
        /// manifest.json of the original run.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "rerun")]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Subcommand)]
enum Experiment {
    TeacherStudent(Common),
    RoughSmooth(Common),
    Flow(Common),
    DiscSweep(Common),
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numeric() { EXIT_NUMERIC } else { EXIT_CONFIG },
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: format!("config error: {e}"),
        }
    }
}

type CliResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn set_threads(threads: Option<usize>) -> CliResult {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure {
                code: EXIT_CONFIG,
                message: e.to_string(),
            })?;
    }
    Ok(())
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> std::result::Result<T, Failure> {
    match path {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Generate(c) => generate(&c),
        Command::Train(c) => train(&c),
        Command::Bounds(c) => bounds(&c),
        Command::Verify { common, trials, checks } => verify_cmd(&common, trials, checks),
        Command::Exp { which } => experiment(which),
        Command::Rerun { manifest, out, threads } => {
            set_threads(threads)?;
            let report = rerun(&manifest, &out)?;
            if report.identical() {
                println!("{} artifacts reproduced byte for byte", report.manifest.artifacts.len());
                Ok(())
            } else {
                Err(Failure {
                    code: EXIT_VIOLATION,
                    message: format!("artifacts differ: {}", report.mismatched.join(", ")),
                })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GenerateConfig {
    seed: u64,
    n_paths: usize,
    channels: usize,
    hurst: f64,
    n_points: usize,
    time_channel: bool,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            seed: 0,
            n_paths: 100,
            channels: 2,
            hurst: 0.5,
            n_points: 100,
            time_channel: false,
        }
    }
}

fn generate(c: &Common) -> CliResult {
    set_threads(c.threads)?;
    let mut cfg: GenerateConfig = read_config(c.config.as_deref())?;
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    let grid = SamplingGrid::uniform_points(cfg.n_points)?;
    let mut paths = sample_fbm(cfg.n_paths, cfg.channels, &grid, cfg.hurst, cfg.seed)?;
    if cfg.time_channel {
        paths = paths.iter().map(augment_time_channel).collect();
    }
    fs::create_dir_all(&c.out)?;
    write_paths_csv_seeded(fs::File::create(c.out.join("paths.csv"))?, &paths, cfg.seed)?;
    DatasetManifest {
        seed: cfg.seed,
        hurst: cfg.hurst,
        d: paths[0].dim(),
        grid,
        n_paths: cfg.n_paths,
    }
    .save(&c.out.join("dataset.json"))?;
    println!("wrote {} paths to {}", paths.len(), c.out.display());
    Ok(())
}

fn default_activation() -> Activation {
    Activation::Tanh
}
fn default_init() -> InitScheme {
    InitScheme::UniformFanIn
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainJob {
    /// Long-format paths CSV.
    paths: PathBuf,
    /// CSV with a `y` column, one row per path.
    labels: PathBuf,
    q: usize,
    p: usize,
    #[serde(default = "default_activation")]
    activation: Activation,
    #[serde(default = "default_init")]
    init: InitScheme,
    loss: LossKind,
    train: TrainConfig,
}

fn train(c: &Common) -> CliResult {
    set_threads(c.threads)?;
    let config = c.config.as_deref().ok_or_else(|| Failure {
        code: EXIT_CONFIG,
        message: "train needs --config".into(),
    })?;
    let mut job: TrainJob = serde_json::from_str(&fs::read_to_string(config)?)?;
    if let Some(s) = c.seed {
        job.train.seed = s;
    }
    let base = config.parent().unwrap_or(Path::new("."));
    let paths = read_paths_csv(fs::File::open(base.join(&job.paths))?)?;
    let labels = read_labels_csv(fs::File::open(base.join(&job.labels))?)?;
    if paths.len() != labels.len() || paths.is_empty() {
        return Err(Error::Config(format!("{} paths but {} labels", paths.len(), labels.len())).into());
    }
    let dims = Dims::new(job.q, job.p, paths[0].dim())?;
    let init = job.init.sample(dims, job.activation, &mut stream_rng(job.train.seed, 0));
    let data: Vec<_> = paths.into_iter().zip(labels).collect();
    let (params, log) = train_erm(&data, &init, &LossSpec::of_kind(job.loss), &job.train)?;
    fs::create_dir_all(&c.out)?;
    fs::write(c.out.join("model.json"), params.to_json()?)?;
    log.write_csv(fs::File::create(c.out.join("train_log.csv"))?, job.train.seed)?;
    log.write_normalized_csv(fs::File::create(c.out.join("norms_normalized.csv"))?, job.train.seed)?;
    println!("loss {} -> {}", log.initial_loss(), log.final_loss());
    Ok(())
}

fn bounds(c: &Common) -> CliResult {
    let req: BoundsRequest = match &c.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => BoundsRequest::reference(),
    };
    let table = bound_table(&req)?;
    fs::create_dir_all(&c.out)?;
    write_reports_csv(fs::File::create(c.out.join("bounds.csv"))?, &table)?;
    for r in &table {
        println!("{:<28} {}", r.name, r.value);
    }
    Ok(())
}

const ALL_CHECKS: [&str; 8] = [
    "output",
    "field",
    "flow",
    "param",
    "outcome",
    "approximation",
    "gradients",
    "discretization",
];

fn verify_cmd(c: &Common, trials: usize, checks: Option<Vec<String>>) -> CliResult {
    set_threads(c.threads)?;
    let space: ParamSpace = match &c.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => ParamSpace::reference(),
    };
    space.validate()?;
    let seed = c.seed.unwrap_or(0);
    let selected: Vec<String> = checks.unwrap_or_else(|| ALL_CHECKS.iter().map(|s| s.to_string()).collect());
    if let Some(bad) = selected.iter().find(|s| !ALL_CHECKS.contains(&s.as_str())) {
        return Err(Error::Config(format!("unknown check {bad:?}")).into());
    }
    let mut results: Vec<CheckResult> = Vec::new();
    let mut diagnostics: Vec<CheckResult> = Vec::new();
    for name in &selected {
        match name.as_str() {
            "output" => results.push(verify::check_output_bound(&space, trials, seed)),
            "field" => results.push(verify::check_field_lipschitz(&space, trials, seed)),
            "flow" => {
                results.extend(verify::check_flow_continuity_by_family(&space, trials, seed));
                diagnostics.push(verify::check_flow_continuity_printed_form(&space, trials, seed));
            }
            "param" => results.push(verify::check_param_lipschitz(&space, trials, seed)),
            "outcome" => results.push(verify::check_outcome_bound(&space, trials, seed)),
            "approximation" => results.push(verify::check_approximation_bias(&space, trials, seed)),
            "gradients" => results.push(verify::check_gradients(trials.min(200), seed)),
            "discretization" => {
                let cfg = DiscSweepConfig {
                    seed,
                    space,
                    ..DiscSweepConfig::default()
                };
                let manifest = run_experiment(&ExperimentConfig::DiscretizationSweep(cfg), &c.out.join("discretization"))?;
                let violations: usize = manifest.summary["table"]["rows"]
                    .as_array()
                    .map(|rows| rows.iter().filter_map(|r| r["violations"].as_u64()).sum::<u64>() as usize)
                    .unwrap_or(0);
                let max_ratio = manifest.summary["table"]["rows"]
                    .as_array()
                    .map(|rows| rows.iter().filter_map(|r| r["max_ratio"].as_f64()).fold(0.0, f64::max))
                    .unwrap_or(0.0);
                results.push(CheckResult {
                    name: "discretization".into(),
                    trials: manifest.summary["table"]["rows"].as_array().map_or(0, Vec::len),
                    violations,
                    max_ratio,
                    worst_case: manifest.summary["table"].clone(),
                });
            }
            _ => unreachable!("validated above"),
        }
    }
    fs::create_dir_all(&c.out)?;
    let mut csv = String::from("name,trials,violations,max_ratio,gating,seed\n");
    for (r, gating) in results.iter().map(|r| (r, true)).chain(diagnostics.iter().map(|r| (r, false))) {
        println!("{}{}", r.summary(), if gating { "" } else { " (diagnostic)" });
        csv.push_str(&format!("{},{},{},{},{},{}\n", r.name, r.trials, r.violations, r.max_ratio, gating, seed));
    }
    fs::write(c.out.join("verify.csv"), csv)?;
    write_json(
        &c.out.join("verify.json"),
        &serde_json::json!({ "checks": results, "diagnostics": diagnostics }),
    )?;
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VIOLATION,
            message: format!("violations in: {}", failed.join(", ")),
        })
    }
}

/// Reads an experiment config that may or may not carry its `kind` tag.
fn experiment_config<T>(c: &Common, wrap: fn(T) -> ExperimentConfig) -> std::result::Result<ExperimentConfig, Failure>
where
    T: for<'de> Deserialize<'de> + Default,
{
    let mut cfg = match &c.config {
        None => wrap(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            let value: serde_json::Value = serde_json::from_str(&text)?;
            if value.get("kind").is_some() {
                let cfg = ExperimentConfig::from_json(&text)?;
                let expected = wrap(T::default()).kind();
                if cfg.kind() != expected {
                    return Err(Error::Config(format!("config kind {} does not match {expected}", cfg.kind())).into());
                }
                cfg
            } else {
                wrap(serde_json::from_value(value)?)
            }
        }
    };
    if let Some(s) = c.seed {
        cfg.set_seed(s);
    }
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

fn experiment(which: Experiment) -> CliResult {
    let (c, cfg) = match which {
        Experiment::TeacherStudent(c) => {
            let cfg = experiment_config::<TeacherStudentConfig>(&c, ExperimentConfig::TeacherStudent)?;
            (c, cfg)
        }
        Experiment::RoughSmooth(c) => {
            let cfg = experiment_config::<RoughSmoothConfig>(&c, ExperimentConfig::RoughSmooth)?;
            (c, cfg)
        }
        Experiment::Flow(c) => {
            let cfg = experiment_config::<FlowConfig>(&c, ExperimentConfig::FlowInterpolation)?;
            (c, cfg)
        }
        Experiment::DiscSweep(c) => {
            let cfg = experiment_config::<DiscSweepConfig>(&c, ExperimentConfig::DiscretizationSweep)?;
            (c, cfg)
        }
    };
    set_threads(c.threads)?;
    let manifest = run_experiment(&cfg, &c.out)?;
    println!(
        "{}: {} artifacts in {} ({} ms)",
        cfg.kind(),
        manifest.artifacts.len(),
        c.out.display(),
        manifest.wall_clock_ms
    );
    println!("{}", serde_json::to_string(&manifest.summary)?);
    Ok(())
}
