//! Stage-I rest/task gate.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::backbone::{softmax, LinearModel};
use crate::error::{Error, Result};

/// Logit index of the task class in the binary gate head.
pub const TASK_INDEX: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub lambda: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { lambda: 0.5 }
    }
}

impl GateConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidParameter(format!(
                "gate threshold {lambda} outside [0, 1]"
            )));
        }
        Ok(Self { lambda })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateDecision {
    Task,
    Rest,
}

/// Softmax probability of the task class from `[rest, task]` logits.
pub fn task_probability(logits: &[f64]) -> Result<f64> {
    if logits.len() != 2 || logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::NonFinite(format!("gate logits {logits:?}")));
    }
    Ok(softmax(logits)[TASK_INDEX])
}

pub fn gate_probability(samples: &Array2<f64>, gate_model: &LinearModel) -> Result<f64> {
    let (logits, _) = gate_model.forward(samples)?;
    task_probability(&logits)
}

/// Task iff `p_task >= lambda`.
pub fn gate_decide(p_task: f64, lambda: f64) -> GateDecision {
    if p_task >= lambda {
        GateDecision::Task
    } else {
        GateDecision::Rest
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn symmetric_logits_give_half() {
        assert_eq!(task_probability(&[0.0, 0.0]).unwrap(), 0.5);
    }

    #[test]
    fn task_logit_ten() {
        // 1 / (1 + e^-10) evaluated in extended precision
        let p = task_probability(&[0.0, 10.0]).unwrap();
        assert!((p - 0.999_954_602_131_297_6).abs() < 1e-15);
    }

    #[test]
    fn untrained_gate_errors() {
        let model = LinearModel::untrained(Array2::eye(2));
        let w = Array2::from_elem((2, 10), 1.0);
        assert!(matches!(gate_probability(&w, &model), Err(Error::NotTrained(_))));
    }

    #[test]
    fn boundary_is_inclusive() {
        assert_eq!(gate_decide(0.6, 0.5), GateDecision::Task);
        assert_eq!(gate_decide(0.5, 0.5), GateDecision::Task);
        assert_eq!(gate_decide(0.4, 0.5), GateDecision::Rest);
    }

    #[test]
    fn threshold_range_checked() {
        assert!(GateConfig::new(1.2).is_err());
        assert!(GateConfig::new(0.0).is_ok());
    }

    proptest! {
        #[test]
        fn monotone_and_vacuous(p in 0.0f64..=1.0, q in 0.0f64..=1.0, lam in 0.0f64..=1.0, mu in 0.0f64..=1.0) {
            let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
            if gate_decide(lo, lam) == GateDecision::Task {
                prop_assert_eq!(gate_decide(hi, lam), GateDecision::Task);
            }
            let (l1, l2) = if lam <= mu { (lam, mu) } else { (mu, lam) };
            if gate_decide(p, l2) == GateDecision::Task {
                prop_assert_eq!(gate_decide(p, l1), GateDecision::Task);
            }
            prop_assert_eq!(gate_decide(p, 0.0), GateDecision::Task);
            prop_assert_eq!(gate_decide(p, 1.0 + 1e-9), GateDecision::Rest);
        }
    }
}
