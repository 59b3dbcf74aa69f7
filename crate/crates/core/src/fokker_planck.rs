//! Drift and diffusion coefficients of the wealth density and an explicit
//! finite-volume solver that tracks the condensed wealth as a separate scalar.
//!
//! The density is piecewise uniform on bins. Face fluxes combine an upwinded
//! drift with a centered diffusion of `D2 P`, where `D2 = B + w^2 A / 2`. The face
//! at `w = 0` carries no flux. The face at `w_max` absorbs: agents crossing it are
//! returned to the lowest bin and the wealth they carried joins the condensed part.
//! Condensed wealth grows through the drift of classical agents toward the
//! condensate and is taxed at `tau_infinity`.

use serde::{Deserialize, Serialize};

use crate::analytics::{lorenz_curve, partial_moments, total_tax_rate, LorenzCurve};
use crate::error::{domain, Error, Result};
use crate::model::{ModelParams, WealthDistribution};
use crate::record::{EngineKind, RunRecord, RunSummary, SeriesRow};

/// Smallest admissible `w_max` in units of the mean wealth.
pub const MIN_SPAN_IN_MEANS: f64 = 50.0;

/// Fraction of the local positivity bound used as the solver step.
pub const STABILITY_SAFETY: f64 = 0.4;

/// Relative undershoot below zero tolerated before a step is rejected.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    /// Bin widths grow geometrically; `growth` is the last width over the first.
    Geometric {
        growth: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bins: usize,
    pub w_max: f64,
    pub spacing: Spacing,
}

impl GridSpec {
    /// Geometric grid of 2048 bins reaching `MIN_SPAN_IN_MEANS` mean wealths.
    pub fn default_for(mean_wealth: f64) -> Self {
        GridSpec {
            bins: 2048,
            w_max: MIN_SPAN_IN_MEANS * mean_wealth,
            spacing: Spacing::Geometric { growth: 64.0 },
        }
    }

    pub fn edges(&self) -> Result<Vec<f64>> {
        if self.bins == 0 {
            return domain("a grid needs at least one bin");
        }
        if !(self.w_max.is_finite() && self.w_max > 0.0) {
            return domain(format!("w_max must be positive (got {})", self.w_max));
        }
        let n = self.bins;
        let mut edges: Vec<f64> = match self.spacing {
            Spacing::Uniform => (0..=n).map(|k| self.w_max * k as f64 / n as f64).collect(),
            Spacing::Geometric { growth } => {
                if !(growth.is_finite() && growth >= 1.0) {
                    return domain(format!("geometric growth must be >= 1 (got {growth})"));
                }
                if n == 1 || growth == 1.0 {
                    (0..=n).map(|k| self.w_max * k as f64 / n as f64).collect()
                } else {
                    let r = growth.powf(1.0 / (n - 1) as f64);
                    let denom = (r.powi(n as i32) - 1.0) / (r - 1.0);
                    let first = self.w_max / denom;
                    let mut e = Vec::with_capacity(n + 1);
                    let (mut x, mut width) = (0.0, first);
                    e.push(0.0);
                    for _ in 0..n {
                        x += width;
                        width *= r;
                        e.push(x);
                    }
                    e
                }
            }
        };
        edges[n] = self.w_max;
        Ok(edges)
    }
}

/// Classical density on bins plus the condensed wealth beyond `w_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WealthGrid {
    edges: Vec<f64>,
    densities: Vec<f64>,
    condensed: f64,
}

impl WealthGrid {
    pub fn new(edges: Vec<f64>, densities: Vec<f64>, condensed: f64) -> Result<Self> {
        if edges.len() < 2 || densities.len() + 1 != edges.len() {
            return domain(format!(
                "{} edges cannot hold {} densities",
                edges.len(),
                densities.len()
            ));
        }
        if edges[0] != 0.0 || edges.windows(2).any(|e| !(e[1] > e[0])) {
            return domain("grid edges must start at 0 and increase strictly");
        }
        if let Some(p) = densities.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return domain(format!("density {p} is not a finite nonnegative number"));
        }
        if !(condensed.is_finite() && condensed >= 0.0) {
            return domain(format!("condensed wealth {condensed} must be >= 0"));
        }
        let grid = WealthGrid {
            edges,
            densities,
            condensed,
        };
        if !(grid.agents() > 0.0) {
            return domain("grid carries no agents");
        }
        Ok(grid)
    }

    /// Exponential classical density holding `(1 - c0) W` with `n_agents` agents,
    /// and `c0 W` condensed. Bin masses follow the exponential law truncated at
    /// `w_max`, with its scale chosen so the binned wealth equals `(1 - c0) W`.
    pub fn exponential(spec: &GridSpec, n_agents: f64, total_wealth: f64, c0: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&c0) {
            return domain(format!(
                "initial condensed fraction {c0} must lie in [0, 1)"
            ));
        }
        if !(n_agents > 0.0 && total_wealth > 0.0) {
            return domain("agent count and total wealth must be positive");
        }
        let edges = spec.edges()?;
        let mean = (1.0 - c0) * total_wealth / n_agents;
        if spec.w_max < MIN_SPAN_IN_MEANS * total_wealth / n_agents {
            return domain(format!(
                "w_max {} is below {MIN_SPAN_IN_MEANS} mean wealths",
                spec.w_max
            ));
        }
        let target = (1.0 - c0) * total_wealth;
        let build = |m: f64| -> Vec<f64> {
            let tail = (-spec.w_max / m).exp();
            edges
                .windows(2)
                .map(|e| {
                    let mass = (-e[0] / m).exp() - (-e[1] / m).exp();
                    n_agents * mass / (1.0 - tail) / (e[1] - e[0])
                })
                .collect()
        };
        let wealth_of = |d: &[f64]| -> f64 {
            edges
                .windows(2)
                .zip(d)
                .map(|(e, p)| p * 0.5 * (e[1] * e[1] - e[0] * e[0]))
                .sum()
        };
        // Binning shifts the mean; bisect the scale so the binned wealth hits the target.
        let (mut lo, mut hi) = (0.25 * mean, 2.0 * mean);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if wealth_of(&build(mid)) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let densities = build(0.5 * (lo + hi));
        let mut grid = WealthGrid::new(edges.clone(), densities, 0.0)?;
        if c0 > 0.0 {
            grid.condensed = (total_wealth - grid.classical_wealth()).max(0.0);
        }
        Ok(grid)
    }

    /// All `n_agents` agents in the bin containing `at`; nothing condensed.
    pub fn spike(spec: &GridSpec, n_agents: f64, at: f64) -> Result<Self> {
        let edges = spec.edges()?;
        if !(at >= 0.0 && at < spec.w_max) {
            return domain(format!("spike location {at} outside [0, {})", spec.w_max));
        }
        let i = edges.partition_point(|&e| e <= at) - 1;
        let mut densities = vec![0.0; edges.len() - 1];
        densities[i] = n_agents / (edges[i + 1] - edges[i]);
        WealthGrid::new(edges, densities, 0.0)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn condensed(&self) -> f64 {
        self.condensed
    }

    pub fn w_max(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn bins(&self) -> usize {
        self.densities.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }

    /// Classical agent count `sum p * width`.
    pub fn agents(&self) -> f64 {
        self.edges
            .windows(2)
            .zip(&self.densities)
            .map(|(e, p)| p * (e[1] - e[0]))
            .sum()
    }

    /// Classical wealth `sum p * center * width`.
    pub fn classical_wealth(&self) -> f64 {
        self.edges
            .windows(2)
            .zip(&self.densities)
            .map(|(e, p)| p * 0.5 * (e[1] * e[1] - e[0] * e[0]))
            .sum()
    }

    pub fn total_wealth(&self) -> f64 {
        self.classical_wealth() + self.condensed
    }

    pub fn condensed_fraction(&self) -> f64 {
        self.condensed / self.total_wealth()
    }

    pub fn to_distribution(&self) -> Result<WealthDistribution> {
        WealthDistribution::from_grid(self.edges.clone(), self.densities.clone(), self.condensed)
    }

    /// `(w_center, density)` rows.
    pub fn snapshot(&self) -> Vec<(f64, f64)> {
        self.centers()
            .into_iter()
            .zip(self.densities.iter().copied())
            .collect()
    }

    fn check_point(&self, z: f64) -> Result<()> {
        if !(z >= 0.0 && z <= self.w_max()) {
            return domain(format!("z = {z} outside the grid [0, {}]", self.w_max()));
        }
        Ok(())
    }
}

/// Drift `M1(z)` of an agent with wealth `z` in the population `dist`.
pub fn drift_m1_dist(dist: &WealthDistribution, z: f64, params: &ModelParams) -> Result<f64> {
    let pm = partial_moments(dist, z)?;
    let n = dist.n_agents();
    let w = dist.total_wealth();
    let t = total_tax_rate(dist, params);
    let bracket = 2.0 * (n / w) * pm.second - 2.0 * z * pm.lorenz - z * z * (n / w) * pm.pareto + z;
    Ok(t / n - z * params.rho(z) - params.zeta * bracket)
}

/// Diffusion `M2(z) = E[min(z, x)^2]` over the classical part of `dist`.
pub fn diffusion_m2_dist(dist: &WealthDistribution, z: f64) -> Result<f64> {
    let pm = partial_moments(dist, z)?;
    Ok(2.0 * pm.second + z * z * pm.pareto)
}

pub fn drift_m1(grid: &WealthGrid, z: f64, params: &ModelParams) -> Result<f64> {
    grid.check_point(z)?;
    drift_m1_dist(&grid.to_distribution()?, z, params)
}

pub fn diffusion_m2(grid: &WealthGrid, z: f64) -> Result<f64> {
    grid.check_point(z)?;
    diffusion_m2_dist(&grid.to_distribution()?, z)
}

/// Bookkeeping of one solver step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FpStepReport {
    /// Agents that crossed `w_max` during the step.
    pub escaped_agents: f64,
    /// Most negative density before clipping, relative to the largest density.
    pub min_relative_density: f64,
    /// Largest step the positivity bound admits for the current coefficients.
    pub admissible_dt: f64,
}

/// Coefficients and scratch space for stepping one grid.
struct Solver {
    params: ModelParams,
    widths: Vec<f64>,
    centers: Vec<f64>,
    /// `centers[i + 1] - centers[i]` for interior faces, `w_max - centers[n-1]` last.
    spacing: Vec<f64>,
    v: Vec<f64>,
    v_olig: Vec<f64>,
    d2: Vec<f64>,
    flux: Vec<f64>,
}

impl Solver {
    fn new(grid: &WealthGrid, params: &ModelParams) -> Self {
        let n = grid.bins();
        let e = &grid.edges;
        let widths: Vec<f64> = e.windows(2).map(|w| w[1] - w[0]).collect();
        let centers = grid.centers();
        let mut spacing: Vec<f64> = centers.windows(2).map(|c| c[1] - c[0]).collect();
        spacing.push(grid.w_max() - centers[n - 1]);
        Solver {
            params: params.clone(),
            widths,
            centers,
            spacing,
            v: vec![0.0; n],
            v_olig: vec![0.0; n],
            d2: vec![0.0; n],
            flux: vec![0.0; n],
        }
    }

    /// Evaluates face drifts (index `f` is the right face of bin `f`) and `D2` at
    /// bin centers from the current density.
    fn coefficients(&mut self, grid: &WealthGrid) {
        let p = &grid.densities;
        let e = &grid.edges;
        let n = p.len();
        let prm = &self.params;
        let agents = grid.agents();
        let w_tot = grid.total_wealth();
        let c = grid.condensed / w_tot;
        let mut tax = prm.tau_infinity * grid.condensed;
        for i in 0..n {
            tax += prm.rho(self.centers[i]) * p[i] * self.centers[i] * self.widths[i];
        }
        let share = tax / agents;
        let zeta = prm.zeta;
        let n_over_w = agents / w_tot;

        // Running integrals of P, x P and x^2/2 P below the left edge of bin i.
        let (mut cum_a, mut cum_w, mut cum_b) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let (lo, hi, x) = (e[i], e[i + 1], self.centers[i]);
            let pi = p[i];
            let a_mid = cum_a + pi * (x - lo);
            let b_mid = cum_b + pi * (x * x * x - lo * lo * lo) / 6.0;
            let pareto_mid = (agents - a_mid) / agents;
            self.d2[i] = b_mid / agents + 0.5 * x * x * pareto_mid;

            cum_a += pi * (hi - lo);
            cum_w += pi * 0.5 * (hi * hi - lo * lo);
            cum_b += pi * (hi * hi * hi - lo * lo * lo) / 6.0;
            let z = hi;
            let pareto = ((agents - cum_a) / agents).max(0.0);
            let lorenz = cum_w / w_tot;
            let second = cum_b / agents;
            let v_tax = share - z * prm.rho(z);
            let v_cc = -zeta
                * (2.0 * n_over_w * second - 2.0 * z * lorenz - z * z * n_over_w * pareto
                    + z * (1.0 - c));
            self.v_olig[i] = -zeta * c * z;
            self.v[i] = v_tax + v_cc + self.v_olig[i];
        }
    }

    fn admissible_dt(&self) -> f64 {
        let n = self.widths.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let right = self.spacing[i];
            let mut rate = self.d2[i] / right + self.v[i].max(0.0);
            if i > 0 {
                rate += self.d2[i] / self.spacing[i - 1] + (-self.v[i - 1]).max(0.0);
            }
            worst = worst.max(rate / self.widths[i]);
        }
        if worst > 0.0 {
            STABILITY_SAFETY / worst
        } else {
            f64::INFINITY
        }
    }

    /// One explicit update of `grid` with the coefficients already evaluated.
    fn advance(&mut self, grid: &mut WealthGrid, dt: f64, time: f64) -> Result<FpStepReport> {
        let n = grid.bins();
        let p = &grid.densities;
        let prm = &self.params;

        // Interior faces: upwinded drift plus centered diffusion.
        let mut drift_sum = 0.0;
        let mut centered_sum = 0.0;
        for f in 0..n - 1 {
            let up = if self.v[f] >= 0.0 { p[f] } else { p[f + 1] };
            let h = self.spacing[f];
            let diffusive = -(self.d2[f + 1] * p[f + 1] - self.d2[f] * p[f]) / h;
            self.flux[f] = self.v[f] * up + diffusive;
            drift_sum += (self.v[f] - self.v_olig[f]) * up * h + diffusive * h;
            centered_sum += 0.5 * (p[f] + p[f + 1]) * h;
        }
        // Absorbing top face with zero density beyond it.
        let last = n - 1;
        let top = self.v[last].max(0.0) * p[last] + self.d2[last] * p[last] / self.spacing[last];
        self.flux[last] = top;

        // Uniform correction velocity making the classical wealth change equal the
        // condensed tax returned minus the flow into the condensate.
        let target = prm.tau_infinity * grid.condensed;
        let delta = if centered_sum > 0.0 {
            (target - drift_sum) / centered_sum
        } else {
            0.0
        };
        let mut gain_olig = 0.0;
        for f in 0..n - 1 {
            let up = if self.v[f] >= 0.0 { p[f] } else { p[f + 1] };
            gain_olig -= self.v_olig[f] * up * self.spacing[f];
            self.flux[f] += delta * 0.5 * (p[f] + p[f + 1]);
        }

        let escaped = top * dt;
        let p = &mut grid.densities;
        let mut left = 0.0;
        for i in 0..n {
            let right = if i == last { 0.0 } else { self.flux[i] };
            p[i] += dt * (left - right) / self.widths[i];
            left = right;
        }
        p[last] -= escaped / self.widths[last];
        p[0] += escaped / self.widths[0];
        grid.condensed += dt * (gain_olig - prm.tau_infinity * grid.condensed)
            + escaped * (self.centers[last] - self.centers[0]);

        let max_p = p.iter().copied().fold(0.0, f64::max);
        let min_p = p.iter().copied().fold(f64::INFINITY, f64::min);
        let min_relative = if max_p > 0.0 { min_p / max_p } else { 0.0 };
        if min_relative < -NEGATIVE_TOLERANCE {
            return Err(Error::Instability {
                time: time + dt,
                min_density: min_p,
            });
        }
        if min_p < 0.0 {
            p.iter_mut().for_each(|x| *x = x.max(0.0));
        }
        if grid.condensed < 0.0 {
            grid.condensed = 0.0;
        }
        Ok(FpStepReport {
            escaped_agents: escaped,
            min_relative_density: min_relative.min(0.0),
            admissible_dt: 0.0,
        })
    }
}

/// One explicit step of length `dt`. Refuses steps beyond the positivity bound.
pub fn fp_step(grid: &WealthGrid, params: &ModelParams, dt: f64) -> Result<WealthGrid> {
    fp_step_report(grid, params, dt).map(|(g, _)| g)
}

pub fn fp_step_report(
    grid: &WealthGrid,
    params: &ModelParams,
    dt: f64,
) -> Result<(WealthGrid, FpStepReport)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return domain(format!("solver step must be positive (got {dt})"));
    }
    let mut solver = Solver::new(grid, params);
    solver.coefficients(grid);
    let admissible = solver.admissible_dt();
    if dt > admissible {
        return Err(Error::Stability {
            requested: dt,
            admissible,
        });
    }
    let mut next = grid.clone();
    let mut report = solver.advance(&mut next, dt, 0.0)?;
    report.admissible_dt = admissible;
    Ok((next, report))
}

/// Largest step `fp_step` accepts for `grid`.
pub fn admissible_dt(grid: &WealthGrid, params: &ModelParams) -> f64 {
    let mut solver = Solver::new(grid, params);
    solver.coefficients(grid);
    solver.admissible_dt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpOptions {
    pub t_end: f64,
    /// Time between recorded series rows.
    pub record_every: f64,
    /// Time between grid and Lorenz snapshots; the final state is always captured.
    #[serde(default)]
    pub snapshot_every: Option<f64>,
    /// Upper limit on the solver step.
    #[serde(default)]
    pub dt_max: Option<f64>,
    pub epsilon: f64,
}

impl FpOptions {
    pub fn new(t_end: f64) -> Self {
        FpOptions {
            t_end,
            record_every: (t_end / 200.0).max(f64::MIN_POSITIVE),
            snapshot_every: None,
            dt_max: None,
            epsilon: 0.01,
        }
    }
}

/// Integrates `init` to `opts.t_end` with the largest stable steps, recording
/// `c(t)`, Gini coefficients and conservation residuals.
pub fn fp_run(init: &WealthGrid, params: &ModelParams, opts: &FpOptions) -> Result<RunRecord> {
    params.validate()?;
    if !(opts.t_end > 0.0 && opts.record_every > 0.0) {
        return domain("t_end and record_every must be positive");
    }
    if !(opts.epsilon > 0.0 && opts.epsilon <= 1.0) {
        return domain(format!("epsilon must lie in (0, 1] (got {})", opts.epsilon));
    }
    let agents0 = init.agents();
    let wealth0 = init.total_wealth();
    if (agents0 - params.n_agents as f64).abs() > 1e-9 * agents0 {
        return domain(format!(
            "grid carries {agents0} agents, parameters declare {}",
            params.n_agents
        ));
    }
    if (wealth0 - params.total_wealth).abs() > 1e-9 * wealth0 {
        return domain(format!(
            "grid carries wealth {wealth0}, parameters declare {}",
            params.total_wealth
        ));
    }
    if init.w_max() < MIN_SPAN_IN_MEANS * wealth0 / agents0 * (1.0 - 1e-12) {
        return domain(format!(
            "w_max {} is below {MIN_SPAN_IN_MEANS} mean wealths",
            init.w_max()
        ));
    }

    let mut grid = init.clone();
    let mut solver = Solver::new(&grid, params);
    let mut t = 0.0;
    let mut series = vec![grid_row(&grid, 0.0, wealth0, opts.epsilon)?];
    let mut lorenz: Vec<(f64, LorenzCurve)> = Vec::new();
    let mut snapshots = Vec::new();
    let mut summary = RunSummary {
        max_abs_agent_residual: Some(0.0),
        ..RunSummary::default()
    };
    let mut escaped_total = 0.0;
    let mut clipped_steps = 0u64;
    let mut next_record = opts.record_every;
    let mut next_snapshot = opts.snapshot_every.unwrap_or(f64::INFINITY);
    if let Some(s) = opts.snapshot_every {
        if !(s > 0.0) {
            return domain("snapshot_every must be positive");
        }
    }
    let tiny = 1e-12 * opts.t_end;

    while t < opts.t_end - tiny {
        solver.coefficients(&grid);
        let mut dt = solver.admissible_dt();
        if let Some(m) = opts.dt_max {
            dt = dt.min(m);
        }
        let stop = next_record.min(next_snapshot).min(opts.t_end);
        let landing = stop - t <= dt;
        if landing {
            dt = stop - t;
        }
        let report = solver.advance(&mut grid, dt, t)?;
        t = if landing { stop } else { t + dt };
        summary.steps += 1;
        escaped_total += report.escaped_agents;
        if report.min_relative_density < 0.0 {
            clipped_steps += 1;
        }
        let agent_res = (grid.agents() - agents0) / agents0;
        let wealth_res = (grid.total_wealth() - wealth0) / wealth0;
        summary.max_abs_wealth_residual = summary.max_abs_wealth_residual.max(wealth_res.abs());
        let worst = summary.max_abs_agent_residual.unwrap().max(agent_res.abs());
        summary.max_abs_agent_residual = Some(worst);

        let done = t >= opts.t_end - tiny;
        if t >= next_record - tiny || done {
            series.push(grid_row(&grid, t, wealth0, opts.epsilon)?);
            while next_record <= t + tiny {
                next_record += opts.record_every;
            }
        }
        if t >= next_snapshot - tiny || done {
            snapshots.push((t, grid.snapshot()));
            lorenz.push((t, lorenz_curve(&grid.to_distribution()?)?));
            if let Some(s) = opts.snapshot_every {
                while next_snapshot <= t + tiny {
                    next_snapshot += s;
                }
            }
        }
    }

    let mut flags = Vec::new();
    if clipped_steps > 0 {
        flags.push(format!(
            "{clipped_steps} steps clipped small negative densities"
        ));
    }
    if escaped_total > 1e-6 * agents0 {
        flags.push(format!(
            "{escaped_total} agents crossed w_max and were returned to the lowest bin"
        ));
    }
    Ok(RunRecord {
        engine: EngineKind::Fp,
        params: params.clone(),
        seed: None,
        stream_id: None,
        series,
        lorenz,
        final_wealths: None,
        grid_snapshots: snapshots,
        summary,
        flags,
    })
}

fn grid_row(grid: &WealthGrid, t: f64, wealth0: f64, epsilon: f64) -> Result<SeriesRow> {
    let dist = grid.to_distribution()?;
    let g_full = lorenz_curve(&dist)?.gini();
    let g_classical = lorenz_curve(&dist.classical_only()?)?.gini();
    let w = grid.total_wealth();
    Ok(SeriesRow {
        t,
        top1_share: grid.condensed / w,
        top_eps_share: (grid.condensed + top_classical_wealth(grid, epsilon * grid.agents())) / w,
        gini_full: g_full,
        gini_classical: g_classical,
        wealth_residual: (w - wealth0) / wealth0,
        clipped_bias_count: 0,
    })
}

/// Wealth held by the richest `k` classical agents.
fn top_classical_wealth(grid: &WealthGrid, k: f64) -> f64 {
    let mut need = k;
    let mut wealth = 0.0;
    for i in (0..grid.bins()).rev() {
        if need <= 0.0 {
            break;
        }
        let (lo, hi) = (grid.edges[i], grid.edges[i + 1]);
        let p = grid.densities[i];
        let mass = p * (hi - lo);
        if mass <= need {
            wealth += p * 0.5 * (hi * hi - lo * lo);
            need -= mass;
        } else {
            // Take the top slice [hi - need / p, hi] of this bin.
            let cut = hi - need / p;
            wealth += p * 0.5 * (hi * hi - cut * cut);
            need = 0.0;
        }
    }
    wealth
}
