use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    SquaredError,
    BinaryCrossEntropyWithLogit,
}

/// A loss together with its Lipschitz constant in the prediction (on the
/// relevant prediction range) and a bound on its values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub kind: LossKind,
    pub lipschitz_const: f64,
    pub sup_bound: f64,
}

impl LossSpec {
    /// Squared error for predictions bounded by `m` and outcomes by `b_y`:
    /// `L = 2(m + b_y)`, `M = (m + b_y)²`.
    pub fn squared_error(m: f64, b_y: f64) -> Self {
        let r = m + b_y;
        LossSpec {
            kind: LossKind::SquaredError,
            lipschitz_const: 2.0 * r,
            sup_bound: r * r,
        }
    }

    /// Logistic loss for predictions bounded by `m`: `L = 1`, `M = softplus(m)`.
    pub fn bce_with_logit(m: f64) -> Self {
        LossSpec {
            kind: LossKind::BinaryCrossEntropyWithLogit,
            lipschitz_const: 1.0,
            sup_bound: softplus(m),
        }
    }

    /// Spec with placeholder constants, for training where only the kind
    /// matters.
    pub fn of_kind(kind: LossKind) -> Self {
        LossSpec {
            kind,
            lipschitz_const: 1.0,
            sup_bound: 0.0,
        }
    }
}

/// `log(1 + eˣ)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn signed_label(y: f64) -> Result<f64> {
    if y == 0.0 || y == 1.0 {
        Ok(2.0 * y - 1.0)
    } else {
        Err(Error::validation(format!(
            "binary cross-entropy needs labels in {{0, 1}}, got {y}"
        )))
    }
}

/// `ℓ(y, pred)`.
pub fn loss_eval(spec: &LossSpec, y: f64, pred: f64) -> Result<f64> {
    loss_value(spec.kind, y, pred)
}

pub(crate) fn loss_value(kind: LossKind, y: f64, pred: f64) -> Result<f64> {
    match kind {
        LossKind::SquaredError => Ok((y - pred) * (y - pred)),
        LossKind::BinaryCrossEntropyWithLogit => Ok(softplus(-signed_label(y)? * pred)),
    }
}

/// `(ℓ(y, pred), ∂ℓ/∂pred)`.
pub(crate) fn loss_and_grad(kind: LossKind, y: f64, pred: f64) -> Result<(f64, f64)> {
    match kind {
        LossKind::SquaredError => Ok(((y - pred) * (y - pred), 2.0 * (pred - y))),
        LossKind::BinaryCrossEntropyWithLogit => {
            let s = signed_label(y)?;
            Ok((softplus(-s * pred), -s * sigmoid(-s * pred)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values() {
        let sq = LossSpec::of_kind(LossKind::SquaredError);
        let bce = LossSpec::of_kind(LossKind::BinaryCrossEntropyWithLogit);
        assert_eq!(loss_eval(&sq, 0.7, 0.7).unwrap(), 0.0);
        assert_eq!(loss_eval(&sq, 1.0, 3.0).unwrap(), 4.0);
        assert!((loss_eval(&bce, 1.0, 0.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(loss_eval(&bce, 0.5, 0.0), Err(Error::Validation(_))));
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn grads_match_differences() {
        for kind in [LossKind::SquaredError, LossKind::BinaryCrossEntropyWithLogit] {
            for &(y, u) in &[(0.0, 0.3), (1.0, -2.0), (1.0, 4.0)] {
                let h = 1e-6;
                let fd = (loss_value(kind, y, u + h).unwrap() - loss_value(kind, y, u - h).unwrap())
                    / (2.0 * h);
                let (_, g) = loss_and_grad(kind, y, u).unwrap();
                assert!((fd - g).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn constants() {
        let s = LossSpec::squared_error(2.0, 1.0);
        assert_eq!((s.lipschitz_const, s.sup_bound), (6.0, 9.0));
        let b = LossSpec::bce_with_logit(0.0);
        assert_eq!(b.lipschitz_const, 1.0);
        assert!((b.sup_bound - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
