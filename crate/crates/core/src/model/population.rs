use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Agent wealths for one run. The length never changes and the total stays equal to
/// `total_wealth_initial` up to rounding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    wealths: Vec<f64>,
    pub time: f64,
    total_wealth_initial: f64,
}

impl Population {
    pub fn new(wealths: Vec<f64>) -> Result<Self> {
        if wealths.is_empty() {
            return domain("population must contain at least one agent");
        }
        if let Some((i, w)) = wealths
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w >= 0.0))
        {
            return domain(format!("agent {i} has invalid wealth {w}"));
        }
        let total = wealths.iter().sum::<f64>();
        if total <= 0.0 {
            return domain("population must hold positive total wealth");
        }
        Ok(Population {
            wealths,
            time: 0.0,
            total_wealth_initial: total,
        })
    }

    /// Every agent holds `total / n`.
    pub fn equal(n: usize, total: f64) -> Result<Self> {
        Self::new(vec![total / n as f64; n])
    }

    /// Exponentially distributed wealths rescaled to sum to `total`.
    pub fn exponential<R: Rng + ?Sized>(n: usize, total: f64, rng: &mut R) -> Result<Self> {
        let mut w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x *= total / s);
        Self::new(w)
    }

    /// Agent 0 holds `c0 * total`, the rest share the remainder equally.
    pub fn with_oligarch(n: usize, total: f64, c0: f64) -> Result<Self> {
        if n < 2 {
            return domain("an oligarch start needs at least two agents");
        }
        if !(0.0..=1.0).contains(&c0) {
            return domain(format!("c0 must lie in [0, 1] (got {c0})"));
        }
        let mut w = vec![(1.0 - c0) * total / (n - 1) as f64; n];
        w[0] = c0 * total;
        Self::new(w)
    }

    pub fn wealths(&self) -> &[f64] {
        &self.wealths
    }

    pub(crate) fn wealths_mut(&mut self) -> &mut [f64] {
        &mut self.wealths
    }

    pub fn len(&self) -> usize {
        self.wealths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wealths.is_empty()
    }

    pub fn total_wealth_initial(&self) -> f64 {
        self.total_wealth_initial
    }

    pub fn total(&self) -> f64 {
        self.wealths.iter().sum()
    }

    /// Relative deviation of the current total from the initial total.
    pub fn conservation_residual(&self) -> f64 {
        (self.total() - self.total_wealth_initial) / self.total_wealth_initial
    }

    /// Wealths sorted ascending.
    pub fn sorted(&self) -> Vec<f64> {
        let mut v = self.wealths.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}
