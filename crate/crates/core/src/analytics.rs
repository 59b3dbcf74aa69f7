//! Partial-moment functionals, total tax, Lorenz curves and Gini coefficients,
//! including the partially condensed case where the Lorenz curve ends at `(1, 1 - c)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::{Classical, ModelParams, WealthDistribution};

/// Partial moments of the classical part at a wealth level `w`.
///
/// * `pareto`: fraction of agents with wealth `>= w`.
/// * `lorenz`: fraction of the total wealth held by classical agents with wealth `< w`.
/// * `second`: `(1/N) * sum of x^2 / 2` over classical agents with wealth `< w`.
///
/// Atoms sitting exactly at `w` are counted in `pareto` only, so that
/// `2 * second + w^2 * pareto` is exactly `E[min(w, x)^2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartialMoments {
    pub pareto: f64,
    pub lorenz: f64,
    pub second: f64,
}

pub fn partial_moments(dist: &WealthDistribution, w: f64) -> Result<PartialMoments> {
    if !(w >= 0.0) {
        return domain(format!("partial moments need w >= 0 (got {w})"));
    }
    let n = dist.n_agents();
    let (agents_below, wealth_below, half_sq_below) = dist.integrals_below(w);
    Ok(PartialMoments {
        pareto: ((n - agents_below) / n).max(0.0),
        lorenz: wealth_below / dist.total_wealth(),
        second: half_sq_below / n,
    })
}

/// Total tax collected per unit time, `T = sum rho(z) z` over the classical part plus
/// `tau_infinity * c * W` levied on the condensed wealth.
///
/// For grids the net rate is evaluated at bin centers.
pub fn total_tax_rate(dist: &WealthDistribution, params: &ModelParams) -> f64 {
    let classical = match dist.classical() {
        Classical::Samples(s) => s.sorted().iter().map(|&x| params.rho(x) * x).sum::<f64>(),
        Classical::Grid(g) => {
            let e = g.edges();
            g.densities()
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    let center = 0.5 * (e[i] + e[i + 1]);
                    params.rho(center) * p * 0.5 * (e[i + 1] * e[i + 1] - e[i] * e[i])
                })
                .sum()
        }
    };
    classical + params.tau_infinity * dist.condensed_fraction() * dist.total_wealth()
}

/// Cumulative (population fraction, wealth fraction) pairs of the full system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LorenzCurve {
    points: Vec<(f64, f64)>,
    /// Terminal wealth fraction, `1 - c`.
    reach: f64,
}

impl LorenzCurve {
    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn reach(&self) -> f64 {
        self.reach
    }

    /// Trapezoid area under the curve.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|p| (p[1].0 - p[0].0) * (p[0].1 + p[1].1))
            .sum::<f64>()
            * 0.5
    }

    pub fn gini(&self) -> f64 {
        1.0 - 2.0 * self.area()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["pop_fraction", "wealth_fraction"])?;
        for (x, y) in &self.points {
            wtr.write_record([x.to_string(), y.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn lorenz_curve(dist: &WealthDistribution) -> Result<LorenzCurve> {
    let w_total = dist.total_wealth();
    let points = match dist.classical() {
        Classical::Samples(s) => {
            let n = s.sorted().len();
            if n == 0 {
                return domain("Lorenz curve of an empty population");
            }
            s.prefix_wealth
                .iter()
                .enumerate()
                .map(|(i, &cum)| (i as f64 / n as f64, cum / w_total))
                .collect()
        }
        Classical::Grid(g) => {
            let n = dist.n_agents();
            // Empty bins add no information and would repeat points.
            let mut pts: Vec<(f64, f64)> = Vec::with_capacity(g.cum_agents.len());
            pts.push((0.0, 0.0));
            for (i, p) in g.densities().iter().enumerate() {
                if *p > 0.0 {
                    pts.push((g.cum_agents[i + 1] / n, g.cum_wealth[i + 1] / w_total));
                }
            }
            pts
        }
    };
    Ok(LorenzCurve {
        points,
        reach: 1.0 - dist.condensed_fraction(),
    })
}

/// Gini coefficient of the full system (classical part plus condensed wealth),
/// one minus twice the trapezoid area under its Lorenz curve.
pub fn gini(dist: &WealthDistribution) -> Result<f64> {
    Ok(lorenz_curve(dist)?.gini())
}

/// Trapezoid Gini of ascending-sorted wealths summing to `total`.
pub fn gini_of_sorted(sorted: &[f64], total: f64) -> f64 {
    let n = sorted.len() as f64;
    let mut cum = 0.0;
    let mut twice_area = 0.0;
    for &x in sorted {
        let next = cum + x;
        twice_area += cum + next;
        cum = next;
    }
    1.0 - twice_area / (n * total)
}

/// Full-system Gini from the condensed fraction `c` and the classical Gini `g_p`:
/// `c + (1 - c) g_p`.
pub fn full_gini(c: f64, g_p: f64) -> Result<f64> {
    check_fraction("c", c)?;
    check_fraction("g_p", g_p)?;
    Ok(c + (1.0 - c) * g_p)
}

/// Classical Gini recovered from the full-system Gini: `(g_P - c) / (1 - c)`.
pub fn classical_gini(c: f64, g_full: f64) -> Result<f64> {
    check_fraction("c", c)?;
    check_fraction("g_P", g_full)?;
    if c >= 1.0 {
        return domain("classical Gini is undefined when all wealth is condensed (c = 1)");
    }
    Ok((g_full - c) / (1.0 - c))
}

/// Full-system Gini with the steady-state condensed fraction substituted:
/// `1 - (tau_inf / zeta)(1 - g_p)` above criticality, `g_p` otherwise.
pub fn steady_state_full_gini(zeta: f64, tau_inf: f64, g_p: f64) -> Result<f64> {
    full_gini(crate::theory::c_infinity(zeta, tau_inf)?, g_p)
}

fn check_fraction(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        domain(format!("{name} must lie in [0, 1] (got {v})"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RateSchedule;

    fn brute_moments(xs: &[f64], w: f64) -> (f64, f64, f64) {
        let n = xs.len() as f64;
        let total: f64 = xs.iter().sum();
        let a = xs.iter().filter(|&&x| x >= w).count() as f64 / n;
        let l = xs.iter().filter(|&&x| x < w).sum::<f64>() / total;
        let b = xs
            .iter()
            .filter(|&&x| x < w)
            .map(|x| x * x / 2.0)
            .sum::<f64>()
            / n;
        (a, l, b)
    }

    #[test]
    fn partial_moments_equal_agents_at_zero() {
        let d = WealthDistribution::from_samples(vec![1.0; 4]).unwrap();
        let m = partial_moments(&d, 0.0).unwrap();
        assert_eq!((m.pareto, m.lorenz, m.second), (1.0, 0.0, 0.0));
    }

    #[test]
    fn partial_moments_equal_agents_above_support() {
        let d = WealthDistribution::from_samples(vec![1.0; 4]).unwrap();
        let m = partial_moments(&d, 2.0).unwrap();
        let (a, l, b) = brute_moments(&[1.0; 4], 2.0);
        // brute force: B = 4 * (1/4) * (1/2) = 0.5
        assert_eq!(b, 0.5);
        assert_eq!((m.pareto, m.lorenz, m.second), (a, l, b));
        assert_eq!((m.pareto, m.lorenz), (0.0, 1.0));
    }

    #[test]
    fn partial_moments_two_atoms() {
        let d = WealthDistribution::from_samples(vec![1.0, 3.0]).unwrap();
        let m = partial_moments(&d, 2.0).unwrap();
        // brute force: B = (1/2)(1^2/2) = 0.25
        assert_eq!(brute_moments(&[1.0, 3.0], 2.0), (0.5, 0.25, 0.25));
        assert_eq!((m.pareto, m.lorenz, m.second), (0.5, 0.25, 0.25));
    }

    #[test]
    fn partial_moments_tie_counts_into_pareto() {
        let d = WealthDistribution::from_samples(vec![1.0, 3.0]).unwrap();
        let m = partial_moments(&d, 1.0).unwrap();
        assert_eq!((m.pareto, m.lorenz, m.second), (1.0, 0.0, 0.0));
    }

    #[test]
    fn partial_moments_negative_w() {
        let d = WealthDistribution::from_samples(vec![1.0]).unwrap();
        assert!(partial_moments(&d, -0.1).is_err());
    }

    #[test]
    fn tax_constant_rate_is_tau_w() {
        let d = WealthDistribution::from_samples(vec![100.0, 300.0, 600.0]).unwrap();
        let p = ModelParams::constant(0.0, 0.1, 3, 1000.0);
        assert!((total_tax_rate(&d, &p) - 100.0).abs() < 1e-12);
        let p0 = ModelParams::constant(0.0, 0.0, 3, 1000.0);
        assert_eq!(total_tax_rate(&d, &p0), 0.0);
    }

    #[test]
    fn tax_step_schedule() {
        let d = WealthDistribution::from_samples(vec![1.0, 10.0]).unwrap();
        let mut p = ModelParams::constant(0.0, 0.0, 2, 11.0);
        p.tax = RateSchedule::Step {
            threshold: 5.0,
            below: 0.1,
            above: 0.2,
        };
        p.tau_infinity = 0.2;
        let brute = 0.1 * 1.0 + 0.2 * 10.0;
        assert!((total_tax_rate(&d, &p) - brute).abs() < 1e-15);
        assert!((brute - 2.1f64).abs() < 1e-15);
    }

    #[test]
    fn tax_includes_condensed() {
        let d = WealthDistribution::from_samples_with_condensed(vec![1.0, 1.0], 0.5, 4.0).unwrap();
        let p = ModelParams::constant(0.0, 0.1, 2, 4.0);
        assert!((total_tax_rate(&d, &p) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn lorenz_equal_is_diagonal() {
        let d = WealthDistribution::from_samples(vec![2.0; 5]).unwrap();
        let l = lorenz_curve(&d).unwrap();
        for (x, y) in l.points() {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(gini(&d).unwrap().abs() < 1e-15);
    }

    #[test]
    fn lorenz_zero_one() {
        let d = WealthDistribution::from_samples(vec![1.0, 0.0]).unwrap();
        let l = lorenz_curve(&d).unwrap();
        assert_eq!(l.points(), &[(0.0, 0.0), (0.5, 0.0), (1.0, 1.0)]);
    }

    #[test]
    fn lorenz_reaches_one_minus_c() {
        let d = WealthDistribution::from_samples_with_condensed(vec![0.5, 1.0, 4.5], 0.4, 10.0)
            .unwrap();
        let l = lorenz_curve(&d).unwrap();
        let last = *l.points().last().unwrap();
        assert_eq!(last.0, 1.0);
        assert!((last.1 - 0.6).abs() < 1e-15);
        assert!((l.reach() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn gini_full_condensation_is_one() {
        let d = WealthDistribution::from_samples_with_condensed(vec![0.0; 3], 1.0, 5.0).unwrap();
        assert!((gini(&d).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gini_half_condensed_equal_classical() {
        // region areas: II = 0, III = 1/4 of a total 1/2
        let d = WealthDistribution::from_samples_with_condensed(vec![1.0; 4], 0.5, 8.0).unwrap();
        assert!((gini(&d).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gini_relation_examples() {
        assert_eq!(full_gini(0.0, 0.37).unwrap(), 0.37);
        assert_eq!(full_gini(0.3, 1.0).unwrap(), 1.0);
        assert!((full_gini(0.5, 0.3).unwrap() - 0.65).abs() < 1e-15);
        assert!((classical_gini(0.5, 0.65).unwrap() - 0.3).abs() < 1e-15);
        assert!(classical_gini(1.0, 1.0).is_err());
    }

    #[test]
    fn gini_relation_region_areas() {
        // synthetic classical curve y = x^2 (G_p = 1/3) scaled to end at 1 - c
        let c = 0.5;
        let n = 2000;
        let pts: Vec<(f64, f64)> = (0..=n)
            .map(|i| {
                let x = i as f64 / n as f64;
                (x, (1.0 - c) * x * x)
            })
            .collect();
        let area: f64 = pts
            .windows(2)
            .map(|p| (p[1].0 - p[0].0) * (p[0].1 + p[1].1) / 2.0)
            .sum();
        let region_total = 0.5;
        let g_full = (region_total - area) / region_total;
        let area_p = area / (1.0 - c);
        let g_p = (0.5 - area_p) / 0.5;
        assert!((full_gini(c, g_p).unwrap() - g_full).abs() < 1e-12);
    }

    #[test]
    fn steady_state_gini() {
        let g = steady_state_full_gini(0.3, 0.1, 0.4).unwrap();
        assert!((g - (1.0 - (0.1 / 0.3) * 0.6)).abs() < 1e-15);
        assert_eq!(steady_state_full_gini(0.05, 0.1, 0.4).unwrap(), 0.4);
    }

    #[test]
    fn sorted_gini_matches_curve() {
        let xs = vec![0.0, 1.0, 2.0, 7.0];
        let d = WealthDistribution::from_samples(xs.clone()).unwrap();
        assert!((gini_of_sorted(&xs, 10.0) - gini(&d).unwrap()).abs() < 1e-15);
    }
}
