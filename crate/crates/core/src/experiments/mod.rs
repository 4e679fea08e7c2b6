//! Experiment drivers: teacher–student training dynamics, rough-vs-smooth
//! classification under random downsampling, flow interpolation and the
//! discretization sweep. Every run writes tidy CSV artifacts and a
//! [`RunManifest`] from which it can be reproduced byte for byte.

mod disc_sweep;
mod flow;
mod rough_smooth;
mod stats;
mod teacher_student;

pub use disc_sweep::{run_discretization_sweep, DiscSweepConfig, DiscSweepSummary};
pub use flow::{run_flow_interpolation, FlowConfig, FlowSummary};
pub use rough_smooth::{run_rough_smooth, Correlation, RoughSmoothConfig, RoughSmoothSummary, SingleModelConfig};
pub use stats::{ranks, spearman, spearman_one_sided_p};
pub use teacher_student::{run_teacher_student, TeacherStudentConfig, TeacherStudentSummary};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{Activation, Dims, ModelParams};
use crate::rng::Rng;

pub const MANIFEST_FORMAT: &str = "ncde-run-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentConfig {
    TeacherStudent(TeacherStudentConfig),
    RoughSmooth(RoughSmoothConfig),
    FlowInterpolation(FlowConfig),
    DiscretizationSweep(DiscSweepConfig),
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::TeacherStudent(_) => "teacher_student",
            ExperimentConfig::RoughSmooth(_) => "rough_smooth",
            ExperimentConfig::FlowInterpolation(_) => "flow_interpolation",
            ExperimentConfig::DiscretizationSweep(_) => "discretization_sweep",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::TeacherStudent(c) => c.seed,
            ExperimentConfig::RoughSmooth(c) => c.seed,
            ExperimentConfig::FlowInterpolation(c) => c.seed,
            ExperimentConfig::DiscretizationSweep(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::TeacherStudent(c) => c.seed = seed,
            ExperimentConfig::RoughSmooth(c) => c.seed = seed,
            ExperimentConfig::FlowInterpolation(c) => c.seed = seed,
            ExperimentConfig::DiscretizationSweep(c) => c.seed = seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ExperimentConfig::TeacherStudent(c) => c.validate(),
            ExperimentConfig::RoughSmooth(c) => c.validate(),
            ExperimentConfig::FlowInterpolation(c) => c.validate(),
            ExperimentConfig::DiscretizationSweep(c) => c.validate(),
        }
    }

    /// Parses a JSON config; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory, `/`-separated.
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub input_hash: String,
    pub artifacts: Vec<Artifact>,
    pub wall_clock_ms: u64,
    /// Headline numbers of the run.
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::Config(format!("unsupported manifest format {:?}", manifest.format)));
        }
        Ok(manifest)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects the files an experiment writes below its output directory.
pub struct ArtifactSink {
    root: PathBuf,
    artifacts: Vec<Artifact>,
}

impl ArtifactSink {
    pub fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(ArtifactSink {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
        })
    }

    /// Writes `bytes` to `rel` (creating parent directories) and records it.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = fs::File::create(&path)?;
        f.write_all(bytes)?;
        self.artifacts.push(Artifact {
            file: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Builds a CSV in memory with `header` and the given rows.
    pub fn write_csv<S: AsRef<str>>(&mut self, rel: &str, header: &[&str], rows: &[Vec<S>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(AsRef::as_ref))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        self.write(rel, &bytes)
    }

    pub fn write_with<F>(&mut self, rel: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(rel, &buf)
    }

    pub fn finish(self) -> Vec<Artifact> {
        self.artifacts
    }
}

/// Runs any experiment into `out_dir` and writes its manifest there.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    config.validate().map_err(|e| Error::Config(e.to_string()))?;
    let start = Instant::now();
    let mut sink = ArtifactSink::new(out_dir)?;
    let summary = match config {
        ExperimentConfig::TeacherStudent(c) => serde_json::to_value(run_teacher_student(c, &mut sink)?)?,
        ExperimentConfig::RoughSmooth(c) => serde_json::to_value(run_rough_smooth(c, &mut sink)?)?,
        ExperimentConfig::FlowInterpolation(c) => serde_json::to_value(run_flow_interpolation(c, &mut sink)?)?,
        ExperimentConfig::DiscretizationSweep(c) => serde_json::to_value(run_discretization_sweep(c, &mut sink)?)?,
    };
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        input_hash: config.content_hash(),
        artifacts: sink.finish(),
        wall_clock_ms: start.elapsed().as_millis() as u64,
        summary,
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

/// Outcome of re-running a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerunReport {
    pub manifest: RunManifest,
    /// Artifacts whose hash or size differs from the original, or that are
    /// missing from either run.
    pub mismatched: Vec<String>,
}

impl RerunReport {
    pub fn identical(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Re-runs the config recorded in `manifest_path` into `out_dir` and
/// compares every artifact against the recorded hashes.
pub fn rerun(manifest_path: &Path, out_dir: &Path) -> Result<RerunReport> {
    let original = RunManifest::load(manifest_path)?;
    if original.config.content_hash() != original.input_hash {
        return Err(Error::Config("manifest input hash does not match its config".into()));
    }
    let manifest = run_experiment(&original.config, out_dir)?;
    let mut mismatched = Vec::new();
    for a in &original.artifacts {
        match manifest.artifacts.iter().find(|b| b.file == a.file) {
            Some(b) if b == a => {}
            _ => mismatched.push(a.file.clone()),
        }
    }
    for b in &manifest.artifacts {
        if !original.artifacts.iter().any(|a| a.file == b.file) {
            mismatched.push(b.file.clone());
        }
    }
    Ok(RerunReport { manifest, mismatched })
}

pub(crate) fn fmt(x: f64) -> String {
    x.to_string()
}

pub(crate) fn check(cond: bool, msg: &str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg.to_string()))
    }
}

/// Random initialization scheme for model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// `U(−1/√fan_in, 1/√fan_in)`, the usual deep-learning default.
    UniformFanIn,
    /// `N(0, 1/fan_in)`.
    NormalFanIn,
}

impl InitScheme {
    pub fn sample(self, dims: Dims, activation: Activation, rng: &mut Rng) -> ModelParams {
        match self {
            InitScheme::UniformFanIn => ModelParams::init_uniform_fan_in(dims, activation, rng),
            InitScheme::NormalFanIn => ModelParams::init_normal_fan_in(dims, activation, rng),
        }
    }
}

/// Fixed tags for [`derive_seed`](crate::rng::derive_seed) so every random
/// ingredient of a run has its own stream.
pub(crate) mod tag {
    pub const DATA: u64 = 1;
    pub const TEACHER: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const STUDENT: u64 = 4;
    pub const MODEL: u64 = 5;
    pub const RUNS: u64 = 6;
    pub const TEST_DATA: u64 = 7;
}
