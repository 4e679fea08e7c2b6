//! Losses, exact gradients, Adam, projection onto Θ and the full-batch ERM
//! loop with parameter-norm tracking.

mod adam;
mod backward;
mod log;
mod loss;

pub use adam::{adam_step, AdamState};
pub use backward::backward;
pub use log::{LogRecord, Snapshot, TrainLog};
pub use loss::{loss_eval, softplus, LossKind, LossSpec};

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::ParamSpace;
use crate::error::{Error, Result};
use crate::model::{predict, ModelParams, ParamGroup};
use crate::paths::SampledPath;

use backward::{add_assign, clear, Tape};

/// Parameter groups that can be excluded from optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeGroup {
    /// The readout Φ.
    Phi,
    /// The initialization layer (U, v).
    Init,
}

impl FreezeGroup {
    pub fn covers(&self, g: ParamGroup) -> bool {
        match self {
            FreezeGroup::Phi => g.is_readout(),
            FreezeGroup::Init => g.is_init(),
        }
    }
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_eps")]
    pub adam_eps: f64,
    /// Radial projection onto Θ after every step when set.
    #[serde(default)]
    pub project_to: Option<ParamSpace>,
    #[serde(default)]
    pub freeze: BTreeSet<FreezeGroup>,
    #[serde(default)]
    pub seed: u64,
    /// Iterations at which to keep a copy of the parameters.
    #[serde(default)]
    pub snapshot_iters: Vec<usize>,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, iterations: usize) -> Self {
        TrainConfig {
            learning_rate,
            iterations,
            adam_beta1: default_beta1(),
            adam_beta2: default_beta2(),
            adam_eps: default_eps(),
            project_to: None,
            freeze: BTreeSet::new(),
            seed: 0,
            snapshot_iters: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning rate must be positive and finite"));
        }
        if self.iterations == 0 {
            return Err(Error::validation("training needs at least one iteration"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::validation("Adam betas must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::validation("Adam epsilon must be positive"));
        }
        if let Some(space) = &self.project_to {
            space.validate()?;
        }
        Ok(())
    }

    pub fn is_frozen(&self, g: ParamGroup) -> bool {
        self.freeze.iter().any(|f| f.covers(g))
    }
}

/// Radially rescales every group whose norm exceeds its bound onto the
/// bound. Applying it twice gives the same result as applying it once.
pub fn project_params(params: &ModelParams, space: &ParamSpace) -> ModelParams {
    let mut out = params.clone();
    for (g, _) in ModelParams::group_ranges(params.dims()) {
        let bound = match g {
            ParamGroup::Phi => space.b_phi,
            ParamGroup::Weight(_) => space.b_a,
            ParamGroup::Bias(_) => space.b_b,
            ParamGroup::InitWeight => space.b_u,
            ParamGroup::InitBias => space.b_v,
        };
        let norm = out.group_norm(g);
        if norm <= bound {
            continue;
        }
        let mut factor = bound / norm;
        let original = out.group(g).to_vec();
        loop {
            for (x, o) in out.group_mut(g).iter_mut().zip(&original) {
                *x = o * factor;
            }
            // Rounding can leave the norm a hair above the bound.
            if out.group_norm(g) <= bound {
                break;
            }
            factor *= 1.0 - f64::EPSILON;
        }
    }
    out
}

fn check_data(params: &ModelParams, data: &[(SampledPath, f64)]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::validation("dataset is empty"));
    }
    let d = params.dims().d;
    for (i, (path, _)) in data.iter().enumerate() {
        if path.dim() != d {
            return Err(Error::at_index(
                i,
                Error::validation(format!("path has {} channels, model expects {d}", path.dim())),
            ));
        }
    }
    Ok(())
}

const CHUNK: usize = 16;

/// Mean loss and its gradient over the dataset. Samples are processed in
/// fixed-size chunks whose partial sums are combined in order, so the result
/// does not depend on the thread count.
pub(crate) fn batch_loss_grad(
    params: &ModelParams,
    data: &[(SampledPath, f64)],
    spec: &LossSpec,
) -> Result<(f64, ModelParams)> {
    let dims = params.dims();
    let scale = 1.0 / data.len() as f64;
    let partials: Vec<(f64, ModelParams)> = data
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut tape = Tape::new(dims);
            let mut grad = ModelParams::zeros(dims, params.activation);
            clear(&mut grad);
            let mut loss = 0.0;
            for (i, (path, y)) in chunk.iter().enumerate() {
                let (l, _) = tape
                    .accumulate(params, path, spec, *y, scale, &mut grad)
                    .map_err(|e| Error::at_index(c * CHUNK + i, e))?;
                loss += l;
            }
            Ok((loss, grad))
        })
        .collect::<Result<_>>()?;
    let mut total = ModelParams::zeros(dims, params.activation);
    let mut loss = 0.0;
    for (l, g) in &partials {
        loss += l;
        add_assign(&mut total, g);
    }
    Ok((loss * scale, total))
}

/// Mean loss `(1/n) Σ ℓ(y_i, f_θ(x_i))`.
pub fn empirical_risk(params: &ModelParams, data: &[(SampledPath, f64)], spec: &LossSpec) -> Result<f64> {
    params.validate()?;
    check_data(params, data)?;
    let losses: Vec<f64> = data
        .par_iter()
        .enumerate()
        .map(|(i, (path, y))| {
            let pred = predict(params, path).map_err(|e| Error::at_index(i, e))?;
            loss::loss_value(spec.kind, *y, pred).map_err(|e| Error::at_index(i, e))
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / data.len() as f64)
}

/// `|R_train − R_test|`, the test mean standing in for the expectation.
pub fn generalization_gap(
    params: &ModelParams,
    train: &[(SampledPath, f64)],
    test: &[(SampledPath, f64)],
    spec: &LossSpec,
) -> Result<f64> {
    Ok((empirical_risk(params, train, spec)? - empirical_risk(params, test, spec)?).abs())
}

/// Full-batch Adam on the mean loss for `config.iterations` steps.
///
/// The log holds `iterations + 1` records: record `t` is measured at the
/// parameters after `t` updates (record 0 is the starting point).
pub fn train_erm(
    data: &[(SampledPath, f64)],
    params0: &ModelParams,
    spec: &LossSpec,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainLog)> {
    config.validate()?;
    params0.validate()?;
    check_data(params0, data)?;
    let mut params = match &config.project_to {
        Some(space) => project_params(params0, space),
        None => params0.clone(),
    };
    let mut log = TrainLog::new(params.dims());
    let mut state = AdamState::new(params.dims());
    let wrap = |iter: usize, e: Error| Error::Numeric {
        step: iter,
        message: format!("training iteration {iter}: {e}"),
    };
    for iter in 0..config.iterations {
        let (loss, grad) = batch_loss_grad(&params, data, spec).map_err(|e| wrap(iter, e))?;
        log.record(iter, loss, &params, &config.snapshot_iters);
        adam_step(&mut params, &grad, &mut state, config);
        if let Some(space) = &config.project_to {
            params = project_params(&params, space);
        }
        if params.to_flat().iter().any(|x| !x.is_finite()) {
            return Err(wrap(iter, Error::validation("parameters became non-finite")));
        }
    }
    let final_loss = empirical_risk(&params, data, spec).map_err(|e| wrap(config.iterations, e))?;
    log.record(config.iterations, final_loss, &params, &config.snapshot_iters);
    Ok((params, log))
}
