use serde::{Deserialize, Serialize};

/// Wealth-dependent rate per unit time, used for the tax schedule `tau(z)` and the
/// redistribution deviation `sigma(z)`.
///
/// Every variant is bounded and has a finite large-wealth limit, so the tax on the
/// wealthiest agents (`tau_infinity`) is always defined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateSchedule {
    Constant {
        value: f64,
    },
    /// `below` for `z < threshold`, `above` otherwise.
    Step {
        threshold: f64,
        below: f64,
        above: f64,
    },
    /// Piecewise constant: `values[k]` applies on `[thresholds[k-1], thresholds[k])`.
    Piecewise {
        thresholds: Vec<f64>,
        values: Vec<f64>,
    },
    /// `limit + (at_zero - limit) * exp(-z / scale)`.
    Saturating {
        at_zero: f64,
        limit: f64,
        scale: f64,
    },
}

impl Default for RateSchedule {
    fn default() -> Self {
        RateSchedule::Constant { value: 0.0 }
    }
}

impl RateSchedule {
    pub fn constant(value: f64) -> Self {
        RateSchedule::Constant { value }
    }

    #[inline]
    pub fn rate(&self, z: f64) -> f64 {
        match self {
            RateSchedule::Constant { value } => *value,
            RateSchedule::Step {
                threshold,
                below,
                above,
            } => {
                if z < *threshold {
                    *below
                } else {
                    *above
                }
            }
            RateSchedule::Piecewise { thresholds, values } => {
                let k = thresholds.partition_point(|&t| t <= z);
                values[k]
            }
            RateSchedule::Saturating {
                at_zero,
                limit,
                scale,
            } => limit + (at_zero - limit) * (-z / scale).exp(),
        }
    }

    /// Large-wealth limit of the schedule.
    pub fn limit(&self) -> f64 {
        match self {
            RateSchedule::Constant { value } => *value,
            RateSchedule::Step { above, .. } => *above,
            RateSchedule::Piecewise { values, .. } => *values.last().unwrap_or(&f64::NAN),
            RateSchedule::Saturating { limit, .. } => *limit,
        }
    }

    /// `Some(value)` when the schedule does not depend on wealth.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            RateSchedule::Constant { value } => Some(*value),
            _ => None,
        }
    }

    pub(crate) fn check(&self, name: &str, errors: &mut Vec<String>) {
        let finite = |v: f64| v.is_finite();
        match self {
            RateSchedule::Constant { value } => {
                if !finite(*value) {
                    errors.push(format!("{name}: constant rate must be finite"));
                }
            }
            RateSchedule::Step {
                threshold,
                below,
                above,
            } => {
                if !(finite(*threshold) && finite(*below) && finite(*above)) {
                    errors.push(format!("{name}: step schedule values must be finite"));
                }
            }
            RateSchedule::Piecewise { thresholds, values } => {
                if values.len() != thresholds.len() + 1 {
                    errors.push(format!(
                        "{name}: piecewise schedule needs one more value than thresholds ({} thresholds, {} values)",
                        thresholds.len(),
                        values.len()
                    ));
                }
                if thresholds.windows(2).any(|w| w[0] >= w[1]) {
                    errors.push(format!(
                        "{name}: piecewise thresholds must be strictly increasing"
                    ));
                }
                if !thresholds.iter().chain(values).all(|v| finite(*v)) {
                    errors.push(format!("{name}: piecewise schedule values must be finite"));
                }
            }
            RateSchedule::Saturating {
                at_zero,
                limit,
                scale,
            } => {
                if !(finite(*at_zero) && finite(*limit)) {
                    errors.push(format!("{name}: saturating schedule values must be finite"));
                }
                if !(scale.is_finite() && *scale > 0.0) {
                    errors.push(format!("{name}: saturating scale must be positive"));
                }
            }
        }
    }
}
