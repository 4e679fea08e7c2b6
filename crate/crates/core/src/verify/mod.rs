//! Randomized empirical verification of the bounds: every inequality is
//! checked on simulated instances with parameters drawn inside Θ.

mod checks;
mod discretization;
mod sampling;
mod teacher;

pub use checks::{
    check_approximation_bias, check_field_lipschitz, check_flow_continuity,
    check_flow_continuity_by_family, check_flow_continuity_printed_form, check_gradients, check_outcome_bound, check_output_bound,
    check_param_lipschitz, flow_inputs, FlowFamily,
};
pub use discretization::{check_discretization_scaling, DiscretizationRow, DiscretizationTable};
pub use sampling::{
    random_grid, random_lipschitz_path, random_lipschitz_path_on, random_piecewise_linear_path_on,
    sample_params_in, vf_lipschitz,
};
pub use teacher::{
    estimate_sup_field_gap, max_field_gap_at, teacher_generate, teacher_spec, TeacherModel,
};

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Absolute slack on every inequality comparison.
pub const SLACK: f64 = 1e-9;

/// Outcome of checking one inequality over many trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub trials: usize,
    /// Trials where the empirical side exceeded the bound by more than the slack.
    pub violations: usize,
    /// Largest `empirical / bound` ratio seen.
    pub max_ratio: f64,
    /// The instance attaining `max_ratio`.
    pub worst_case: Value,
}

impl CheckResult {
    pub fn empty(name: &str) -> Self {
        CheckResult {
            name: name.to_string(),
            trials: 0,
            violations: 0,
            max_ratio: 0.0,
            worst_case: Value::Null,
        }
    }

    /// One trial comparing `empirical ≤ bound + slack`.
    pub fn single(name: &str, empirical: f64, bound: f64, slack: f64, instance: impl FnOnce() -> Value) -> Self {
        let ratio = if empirical <= 0.0 {
            0.0
        } else if bound > 0.0 {
            empirical / bound
        } else {
            f64::INFINITY
        };
        let violated = !(empirical <= bound + slack);
        CheckResult {
            name: name.to_string(),
            trials: 1,
            violations: usize::from(violated),
            max_ratio: if empirical.is_nan() { f64::INFINITY } else { ratio },
            worst_case: instance(),
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    /// Associative merge: sums counts, keeps the larger ratio and its
    /// instance (the left one on ties).
    pub fn merge(mut self, other: CheckResult) -> CheckResult {
        let take_other = self.trials == 0 || other.max_ratio > self.max_ratio;
        self.trials += other.trials;
        self.violations += other.violations;
        if take_other {
            self.max_ratio = other.max_ratio;
            self.worst_case = other.worst_case;
        }
        self
    }

    pub(crate) fn merge_all(name: &str, parts: impl IntoIterator<Item = CheckResult>) -> CheckResult {
        let mut acc = CheckResult::empty(name);
        for p in parts {
            acc = acc.merge(p);
        }
        acc.name = name.to_string();
        acc
    }

    /// One-line summary.
    pub fn summary(&self) -> String {
        format!(
            "{}: {} trials, {} violations, max ratio {:.6}",
            self.name, self.trials, self.violations, self.max_ratio
        )
    }
}
