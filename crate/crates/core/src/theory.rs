//! Logistic law for the condensed wealth fraction: steady state, closed-form and
//! numerically integrated trajectories, and linear stability of the fixed points.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Relative distance `|zeta - tau_inf| < CRITICAL_REL * zeta` is treated as critical.
pub const CRITICAL_REL: f64 = 1e-12;

/// Steady-state condensed fraction: `0` for `zeta <= tau_inf`, else `1 - tau_inf / zeta`.
pub fn c_infinity(zeta: f64, tau_inf: f64) -> Result<f64> {
    if !(zeta >= 0.0 && tau_inf >= 0.0) {
        return domain(format!(
            "c_infinity needs zeta >= 0 and tau_inf >= 0 (got {zeta}, {tau_inf})"
        ));
    }
    Ok(if zeta <= tau_inf {
        0.0
    } else {
        1.0 - tau_inf / zeta
    })
}

/// `c (-tau_inf + zeta (1 - c))`.
#[inline]
pub fn logistic_rhs(c: f64, zeta: f64, tau_inf: f64) -> f64 {
    c * (-tau_inf + zeta * (1.0 - c))
}

pub fn is_critical(zeta: f64, tau_inf: f64) -> bool {
    (zeta - tau_inf).abs() <= CRITICAL_REL * zeta
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub zeta: f64,
    pub tau_inf: f64,
    pub c0: f64,
}

impl LogisticParams {
    pub fn new(zeta: f64, tau_inf: f64, c0: f64) -> Result<Self> {
        let mut errors = Vec::new();
        if !(zeta.is_finite() && zeta >= 0.0) {
            errors.push(format!("zeta must be >= 0 (got {zeta})"));
        }
        if !tau_inf.is_finite() {
            errors.push(format!("tau_inf must be finite (got {tau_inf})"));
        }
        if !(0.0..=1.0).contains(&c0) {
            errors.push(format!("c0 must lie in [0, 1] (got {c0})"));
        }
        if errors.is_empty() {
            Ok(LogisticParams { zeta, tau_inf, c0 })
        } else {
            Err(Error::InvalidParams(errors))
        }
    }

    /// Net growth rate at `c = 0`, `zeta - tau_inf`.
    pub fn rate(&self) -> f64 {
        self.zeta - self.tau_inf
    }
}

/// Exact solution of the logistic law at time `t`.
///
/// Written as `c0 e^{rt} / (1 + zeta c0 (e^{rt} - 1) / r)` with `r = zeta - tau_inf`,
/// which equals `K c0 e^{rt} / (c0 (e^{rt} - 1) + K)` for `K = 1 - tau_inf / zeta` and
/// stays finite for `zeta = 0`. At criticality the solution is `c0 / (1 + zeta c0 t)`.
pub fn logistic_closed_form(p: &LogisticParams, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return domain(format!("closed form needs t >= 0 (got {t})"));
    }
    let LogisticParams { zeta, c0, .. } = *p;
    if c0 == 0.0 {
        return Ok(0.0);
    }
    if is_critical(zeta, p.tau_inf) {
        // zeta = tau_inf = 0 falls through here with a constant solution
        return Ok(c0 / (1.0 + zeta * c0 * t));
    }
    let r = p.rate();
    let rt = r * t;
    let c = if rt <= 0.0 {
        c0 * rt.exp() / (1.0 + zeta * c0 * rt.exp_m1() / r)
    } else {
        c0 / ((-rt).exp() - zeta * c0 * (-rt).exp_m1() / r)
    };
    Ok(c)
}

/// Tolerances for the adaptive integrator.
#[derive(Clone, Copy, Debug)]
pub struct IntegratorOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        IntegratorOptions {
            rtol: 1e-10,
            atol: 1e-15,
            max_steps: 1_000_000,
        }
    }
}

/// Integrates the logistic law with an adaptive Dormand-Prince 5(4) pair and returns
/// `c` at every point of `t_grid` (increasing, starting at 0).
pub fn logistic_integrate(p: &LogisticParams, t_grid: &[f64]) -> Result<Vec<f64>> {
    logistic_integrate_with(p, t_grid, IntegratorOptions::default())
}

pub fn logistic_integrate_with(
    p: &LogisticParams,
    t_grid: &[f64],
    opts: IntegratorOptions,
) -> Result<Vec<f64>> {
    match t_grid.first() {
        None => return domain("empty time grid"),
        Some(&t0) if t0 != 0.0 => return domain(format!("time grid must start at 0 (got {t0})")),
        _ => {}
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("time grid must be strictly increasing");
    }
    let f = |c: f64| logistic_rhs(c, p.zeta, p.tau_inf);
    let mut out = Vec::with_capacity(t_grid.len());
    let mut y = p.c0;
    let mut t = 0.0;
    out.push(y);
    let scale = (p.zeta.abs() + p.tau_inf.abs()).max(1e-3);
    let mut h = 1e-3 / scale;
    let mut steps = 0usize;
    for &target in &t_grid[1..] {
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::Tolerance {
                    requested: opts.rtol,
                    achieved: f64::NAN,
                    time: t,
                });
            }
            steps += 1;
            let remaining = target - t;
            let truncated = h >= remaining;
            let step = if truncated { remaining } else { h };
            let (y_new, err) = dopri_step(&f, y, step);
            let tol = opts.atol + opts.rtol * y.abs().max(y_new.abs());
            let ratio = err / tol;
            let factor = if ratio == 0.0 {
                5.0
            } else {
                (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
            };
            if ratio <= 1.0 {
                y = y_new;
                t = if truncated { target } else { t + step };
                // a shortened landing step must not shrink the working step size
                h = if truncated {
                    h.max(step * factor)
                } else {
                    step * factor
                };
            } else {
                h = step * factor;
                if h <= 1e-14 * t.abs().max(1.0) {
                    return Err(Error::Tolerance {
                        requested: opts.rtol,
                        achieved: err / y.abs().max(opts.atol),
                        time: t,
                    });
                }
            }
        }
        out.push(y);
    }
    Ok(out)
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One autonomous Dormand-Prince step; returns the 5th-order value and the error estimate.
fn dopri_step(f: &impl Fn(f64) -> f64, y: f64, h: f64) -> (f64, f64) {
    let k1 = f(y);
    let k2 = f(y + h * A21 * k1);
    let k3 = f(y + h * (A31 * k1 + A32 * k2));
    let k4 = f(y + h * (A41 * k1 + A42 * k2 + A43 * k3));
    let k5 = f(y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
    let k6 = f(y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
    let y5 = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6);
    let k7 = f(y5);
    let err = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
    (y5, err.abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FixedPoint {
    pub c: f64,
    /// Linearized rate `d/dc [c (zeta (1 - c) - tau_inf)]` at the point.
    pub eigenvalue: f64,
    pub stable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    pub fixed_points: Vec<FixedPoint>,
    /// The attracting fixed point in `[0, 1]`.
    pub stable_point: f64,
    /// `zeta == tau_inf`: the two fixed points merge and the eigenvalue vanishes.
    pub critical: bool,
}

pub fn stability(zeta: f64, tau_inf: f64) -> StabilityReport {
    let r = zeta - tau_inf;
    let critical = is_critical(zeta, tau_inf);
    if critical {
        return StabilityReport {
            fixed_points: vec![FixedPoint {
                c: 0.0,
                eigenvalue: 0.0,
                stable: false,
            }],
            stable_point: 0.0,
            critical,
        };
    }
    let mut fixed_points = vec![FixedPoint {
        c: 0.0,
        eigenvalue: r,
        stable: r < 0.0,
    }];
    if zeta > 0.0 {
        let k = 1.0 - tau_inf / zeta;
        if (0.0..=1.0).contains(&k) && k > 0.0 {
            fixed_points.push(FixedPoint {
                c: k,
                eigenvalue: -r,
                stable: r > 0.0,
            });
        }
    }
    let stable_point = fixed_points.iter().find(|p| p.stable).map_or(0.0, |p| p.c);
    StabilityReport {
        fixed_points,
        stable_point,
        critical,
    }
}

/// Writes `(t, c)` rows.
pub fn write_trajectory_csv<W: Write>(ts: &[f64], cs: &[f64], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["t", "c"])?;
    for (t, c) in ts.iter().zip(cs) {
        wtr.write_record([t.to_string(), c.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Closed-form trajectory on `n + 1` evenly spaced times in `[0, t_end]`.
pub fn closed_form_trajectory(
    p: &LogisticParams,
    t_end: f64,
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(t_end > 0.0) || n == 0 {
        return domain("trajectory needs t_end > 0 and at least one interval");
    }
    let ts: Vec<f64> = (0..=n).map(|i| t_end * i as f64 / n as f64).collect();
    let cs = ts
        .iter()
        .map(|&t| logistic_closed_form(p, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((ts, cs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c_infinity_examples() {
        assert_eq!(c_infinity(0.1, 0.1).unwrap(), 0.0);
        assert!((c_infinity(0.2, 0.1).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(c_infinity(0.3, 0.0).unwrap(), 1.0);
        assert_eq!(c_infinity(0.0, 0.0).unwrap(), 0.0);
        assert!(c_infinity(-0.1, 0.0).is_err());
    }

    #[test]
    fn rhs_fixed_points() {
        assert_eq!(logistic_rhs(0.0, 0.3, 0.1), 0.0);
        let k = 1.0 - 0.1 / 0.3;
        assert!(logistic_rhs(k, 0.3, 0.1).abs() < 1e-16);
        // 0.5 (-0.1 + 0.2 * 0.5) = 0
        assert_eq!(logistic_rhs(0.5, 0.2, 0.1), 0.0);
    }

    #[test]
    fn closed_form_initial_and_limit() {
        for &(z, t, c0) in &[(0.3, 0.1, 0.2), (0.05, 0.1, 0.7), (0.2, 0.0, 0.01)] {
            let p = LogisticParams::new(z, t, c0).unwrap();
            assert_eq!(logistic_closed_form(&p, 0.0).unwrap(), c0);
        }
        let p = LogisticParams::new(0.3, 0.1, 0.01).unwrap();
        let c = logistic_closed_form(&p, 1e4).unwrap();
        assert!((c - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_critical_branch() {
        let p = LogisticParams::new(0.1, 0.1, 0.5).unwrap();
        let c = logistic_closed_form(&p, 20.0).unwrap();
        assert!((c - 0.25).abs() < 1e-15);
        let num = logistic_integrate(&p, &[0.0, 20.0]).unwrap();
        assert!((num[1] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn closed_form_zero_zero_is_constant() {
        let p = LogisticParams::new(0.0, 0.0, 0.4).unwrap();
        assert_eq!(logistic_closed_form(&p, 100.0).unwrap(), 0.4);
    }

    #[test]
    fn closed_form_without_advantage_decays_exponentially() {
        let p = LogisticParams::new(0.0, 0.1, 0.4).unwrap();
        let c = logistic_closed_form(&p, 10.0).unwrap();
        assert!((c - 0.4 * (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn integrate_matches_closed_form() {
        let p = LogisticParams::new(0.2, 0.1, 0.01).unwrap();
        let ts: Vec<f64> = (0..=400).map(|i| i as f64 * 0.5).collect();
        let num = logistic_integrate(&p, &ts).unwrap();
        assert_eq!(num[0], 0.01);
        let max_dev = ts
            .iter()
            .zip(&num)
            .map(|(&t, &c)| (c - logistic_closed_form(&p, t).unwrap()).abs())
            .fold(0.0, f64::max);
        assert!(max_dev < 1e-8, "max deviation {max_dev}");
    }

    #[test]
    fn integrate_zero_stays_zero() {
        let p = LogisticParams::new(0.3, 0.1, 0.0).unwrap();
        let num = logistic_integrate(&p, &[0.0, 1.0, 50.0]).unwrap();
        assert!(num.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn integrate_rejects_bad_grid() {
        let p = LogisticParams::new(0.3, 0.1, 0.1).unwrap();
        assert!(logistic_integrate(&p, &[1.0, 2.0]).is_err());
        assert!(logistic_integrate(&p, &[0.0, 2.0, 2.0]).is_err());
    }

    #[test]
    fn integrate_reports_unmet_tolerance() {
        let p = LogisticParams::new(0.3, 0.1, 0.1).unwrap();
        let opts = IntegratorOptions {
            max_steps: 3,
            ..Default::default()
        };
        let err = logistic_integrate_with(&p, &[0.0, 200.0], opts).unwrap_err();
        assert!(matches!(err, Error::Tolerance { .. }));
    }

    #[test]
    fn stability_supercritical() {
        let r = stability(0.3, 0.1);
        assert!(!r.critical);
        assert!((r.stable_point - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.fixed_points[0].eigenvalue - 0.2).abs() < 1e-15);
        assert!(!r.fixed_points[0].stable);
        assert!((r.fixed_points[1].eigenvalue + 0.2).abs() < 1e-15);
    }

    #[test]
    fn stability_subcritical_and_critical() {
        let r = stability(0.05, 0.1);
        assert_eq!(r.stable_point, 0.0);
        assert_eq!(r.fixed_points.len(), 1);
        assert!(r.fixed_points[0].stable);
        let c = stability(0.1, 0.1);
        assert!(c.critical);
        assert_eq!(c.fixed_points[0].eigenvalue, 0.0);
    }
}
