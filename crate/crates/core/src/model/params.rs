use serde::{Deserialize, Serialize};

use super::RateSchedule;
use crate::error::{Error, Result};

/// Probe wealth, in units of the mean wealth, at which the large-wealth limit of
/// `tau - sigma` is checked against `tau_infinity`.
const LIMIT_PROBE_FACTOR: f64 = 1e12;
const LIMIT_TOLERANCE: f64 = 1e-9;

/// Parameters of the biased yard-sale walk with taxation and redistribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Wealth-attained advantage strength.
    pub zeta: f64,
    pub tax: RateSchedule,
    pub sigma: RateSchedule,
    pub dt: f64,
    pub n_agents: usize,
    pub total_wealth: f64,
    /// Tax rate on the wealthiest agents, the large-wealth limit of `tau - sigma`.
    pub tau_infinity: f64,
}

impl ModelParams {
    /// Constant tax, uniform redistribution (`sigma = 0`), `dt = 0.01`.
    pub fn constant(zeta: f64, tau: f64, n_agents: usize, total_wealth: f64) -> Self {
        ModelParams {
            zeta,
            tax: RateSchedule::constant(tau),
            sigma: RateSchedule::constant(0.0),
            dt: 0.01,
            n_agents,
            total_wealth,
            tau_infinity: tau,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    /// Net tax rate `rho(z) = tau(z) - sigma(z)`.
    #[inline]
    pub fn rho(&self, z: f64) -> f64 {
        self.tax.rate(z) - self.sigma.rate(z)
    }

    #[inline]
    pub fn sqrt_dt(&self) -> f64 {
        self.dt.sqrt()
    }

    pub fn mean_wealth(&self) -> f64 {
        self.total_wealth / self.n_agents as f64
    }

    /// Checks every invariant and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if !(self.zeta.is_finite() && self.zeta >= 0.0) {
            errors.push(format!("zeta must be finite and >= 0 (got {})", self.zeta));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            errors.push(format!("dt must be positive (got {})", self.dt));
        } else if self.dt.sqrt() > 1.0 {
            errors.push(format!(
                "sqrt(dt) must not exceed 1, the stake would exceed the poorer agent's wealth (got dt = {})",
                self.dt
            ));
        }
        if self.n_agents == 0 {
            errors.push("n_agents must be at least 1".to_string());
        }
        if !(self.total_wealth.is_finite() && self.total_wealth > 0.0) {
            errors.push(format!(
                "total_wealth must be positive (got {})",
                self.total_wealth
            ));
        }
        if !self.tau_infinity.is_finite() {
            errors.push("tau_infinity must be finite".to_string());
        }
        self.tax.check("tax", &mut errors);
        self.sigma.check("sigma", &mut errors);

        if errors.is_empty() {
            let sigma_inf = self.sigma.limit();
            if sigma_inf.abs() > LIMIT_TOLERANCE {
                errors.push(format!(
                    "sigma must vanish for large wealth (limit is {sigma_inf})"
                ));
            }
            let probe = LIMIT_PROBE_FACTOR * self.mean_wealth();
            let rho_probe = self.rho(probe);
            if (rho_probe - self.tau_infinity).abs()
                > LIMIT_TOLERANCE * self.tau_infinity.abs().max(1.0)
            {
                errors.push(format!(
                    "tau_infinity = {} does not match tau - sigma = {} at probe wealth {:e}",
                    self.tau_infinity, rho_probe, probe
                ));
            }
        }

        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errors))
        }
    }
}
