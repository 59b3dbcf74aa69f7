//! Parameter sweeps over independent (cell, seed) jobs, per-cell aggregation and
//! least-squares logistic fits of condensation transients.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fokker_planck::{fp_run, FpOptions, GridSpec, Spacing, WealthGrid, MIN_SPAN_IN_MEANS};
use crate::mc::{simulate, InitialCondition, SimulationOptions};
use crate::model::{ModelParams, RateSchedule};
use crate::record::{config_hash, EngineKind, Manifest, RunRecord, SeriesRow};
use crate::rng::{job_stream_id, RngStream};
use crate::theory::{c_infinity, closed_form_trajectory, LogisticParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepEngine {
    Mc,
    Fp,
    Theory,
}

/// One parameter tuple of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSpec {
    pub zeta: f64,
    /// Constant tax rate; ignored when `tax` is given.
    #[serde(default)]
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tax: Option<RateSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<RateSchedule>,
    pub n_agents: usize,
    pub dt: f64,
    pub t_end: f64,
}

impl CellSpec {
    pub fn params(&self, total_wealth: f64) -> ModelParams {
        let tax = self.tax.clone().unwrap_or(RateSchedule::constant(self.tau));
        let sigma = self.sigma.clone().unwrap_or_default();
        ModelParams {
            zeta: self.zeta,
            tau_infinity: tax.limit() - sigma.limit(),
            tax,
            sigma,
            dt: self.dt,
            n_agents: self.n_agents,
            total_wealth,
        }
    }
}

/// Cartesian product of constant-tax cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub zeta: Vec<f64>,
    pub tau: Vec<f64>,
    pub n_agents: Vec<usize>,
    pub dt: Vec<f64>,
    pub t_end: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpSettings {
    pub bins: usize,
    pub growth: f64,
    pub span_in_means: f64,
}

impl Default for FpSettings {
    fn default() -> Self {
        FpSettings {
            bins: 400,
            growth: 64.0,
            span_in_means: MIN_SPAN_IN_MEANS,
        }
    }
}

fn default_seeds() -> usize {
    1
}

fn default_window() -> f64 {
    0.2
}

fn default_records() -> usize {
    500
}

/// Sweep description, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub engine: SweepEngine,
    /// Explicit cells, run before the cells of `grid`.
    #[serde(default)]
    pub cells: Vec<CellSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<CellGrid>,
    /// Seeds per cell; deterministic engines run once per cell.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Final fraction of each run averaged for the terminal statistics.
    #[serde(default = "default_window")]
    pub window_fraction: f64,
    /// Worker threads; defaults to the available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default)]
    pub initial: InitialCondition,
    /// Mean wealth per agent.
    #[serde(default = "one")]
    pub mean_wealth: f64,
    /// Approximate number of recorded rows per run.
    #[serde(default = "default_records")]
    pub records_per_run: usize,
    #[serde(default)]
    pub fp: FpSettings,
}

fn one() -> f64 {
    1.0
}

impl SweepPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        let plan: SweepPlan = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    /// All cells in execution order: explicit cells, then the grid in row-major order
    /// of (zeta, tau, n_agents, dt, t_end).
    pub fn expand_cells(&self) -> Vec<CellSpec> {
        let mut cells = self.cells.clone();
        if let Some(g) = &self.grid {
            for &zeta in &g.zeta {
                for &tau in &g.tau {
                    for &n_agents in &g.n_agents {
                        for &dt in &g.dt {
                            for &t_end in &g.t_end {
                                cells.push(CellSpec {
                                    zeta,
                                    tau,
                                    tax: None,
                                    sigma: None,
                                    n_agents,
                                    dt,
                                    t_end,
                                });
                            }
                        }
                    }
                }
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let cells = self.expand_cells();
        if cells.is_empty() {
            errors.push("plan has no cells".to_string());
        }
        if self.seeds == 0 {
            errors.push("every cell needs at least one seed".to_string());
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            errors.push(format!(
                "window_fraction {} outside (0, 1]",
                self.window_fraction
            ));
        }
        if self.workers == Some(0) {
            errors.push("workers must be at least 1".to_string());
        }
        if !(self.mean_wealth > 0.0) {
            errors.push("mean_wealth must be positive".to_string());
        }
        if self.records_per_run == 0 {
            errors.push("records_per_run must be at least 1".to_string());
        }
        for (i, cell) in cells.iter().enumerate() {
            let params = cell.params(self.mean_wealth * cell.n_agents as f64);
            if let Err(Error::InvalidParams(list)) = params.validate() {
                errors.extend(list.into_iter().map(|e| format!("cell {i}: {e}")));
            }
            if !(cell.t_end > 0.0) {
                errors.push(format!("cell {i}: t_end must be positive"));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errors))
        }
    }

    fn seeds_for(&self) -> usize {
        match self.engine {
            SweepEngine::Mc => self.seeds,
            SweepEngine::Fp | SweepEngine::Theory => 1,
        }
    }
}

/// Terminal statistics of one job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobOutcome {
    pub cell: usize,
    pub seed_index: usize,
    pub stream_id: u64,
    pub directory: String,
    pub terminal_top1: Option<f64>,
    pub terminal_gini: Option<f64>,
    pub rate_hat: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellAggregate {
    pub zeta: f64,
    pub tau: f64,
    pub n_agents: usize,
    pub seeds: usize,
    pub mean_top1: f64,
    pub se_top1: f64,
    pub mean_gini: f64,
    pub c_theory: f64,
    pub abs_error: f64,
    pub mean_rate_hat: f64,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub cells: Vec<CellAggregate>,
    pub jobs: Vec<JobOutcome>,
}

impl SweepResult {
    pub fn failed_jobs(&self) -> usize {
        self.jobs.iter().filter(|j| j.error.is_some()).count()
    }
}

/// Column order of `aggregate.csv`.
pub const AGGREGATE_HEADER: [&str; 11] = [
    "zeta",
    "tau",
    "N",
    "seeds",
    "mean_top1",
    "se_top1",
    "mean_gini",
    "c_theory",
    "abs_error",
    "mean_rate_hat",
    "failed",
];

/// Runs every job of `plan`, writes per-job outputs under `jobs/`, then
/// `aggregate.csv` and `summary.json` in the output directory.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepResult> {
    plan.validate()?;
    fs::create_dir_all(&plan.output_dir)?;
    let cells = plan.expand_cells();
    let seeds = plan.seeds_for();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..seeds).map(move |s| (c, s)))
        .collect();

    let run_all = || -> Vec<JobOutcome> {
        jobs.par_iter()
            .map(|&(c, s)| run_job(plan, &cells[c], c, s))
            .collect()
    };
    let workers = plan
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let outcomes = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?
        .install(run_all);

    let aggregates: Vec<CellAggregate> = cells
        .iter()
        .enumerate()
        .map(|(i, cell)| aggregate_cell(plan, cell, &outcomes[i * seeds..(i + 1) * seeds]))
        .collect();
    let result = SweepResult {
        cells: aggregates,
        jobs: outcomes,
    };
    write_aggregate(&plan.output_dir.join("aggregate.csv"), &result.cells)?;
    let summary = serde_json::json!({
        "plan_hash": config_hash(plan),
        "failed_jobs": result.failed_jobs(),
        "cells": result.cells,
        "jobs": result.jobs,
    });
    serde_json::to_writer_pretty(
        BufWriter::new(File::create(plan.output_dir.join("summary.json"))?),
        &summary,
    )?;
    Ok(result)
}

/// Runs one cell/seed job with the stream of its indices.
pub fn run_cell(
    plan: &SweepPlan,
    cell: &CellSpec,
    cell_index: usize,
    seed_index: usize,
) -> Result<RunRecord> {
    let total = plan.mean_wealth * cell.n_agents as f64;
    let params = cell.params(total);
    let stream = job_stream_id(cell_index, seed_index);
    let record_every_t = cell.t_end / plan.records_per_run as f64;
    match plan.engine {
        SweepEngine::Mc => {
            let init = plan
                .initial
                .build(cell.n_agents, total, plan.master_seed, stream)?;
            let mut opts = SimulationOptions::new(cell.t_end);
            opts.record_every = ((record_every_t / cell.dt).round() as u64).max(1);
            simulate(
                &params,
                init,
                RngStream::new(plan.master_seed, stream),
                &opts,
                &mut [],
            )
        }
        SweepEngine::Fp => {
            let spec = GridSpec {
                bins: plan.fp.bins,
                w_max: plan.fp.span_in_means * plan.mean_wealth,
                spacing: Spacing::Geometric {
                    growth: plan.fp.growth,
                },
            };
            let grid =
                WealthGrid::exponential(&spec, cell.n_agents as f64, total, plan.initial.c0())?;
            let params = ModelParams {
                total_wealth: grid.total_wealth(),
                ..params
            };
            let mut opts = FpOptions::new(cell.t_end);
            opts.record_every = record_every_t;
            fp_run(&grid, &params, &opts)
        }
        SweepEngine::Theory => {
            theory_record(&params, plan.initial.c0(), cell.t_end, plan.records_per_run)
        }
    }
}

/// Closed-form `c(t)` as a run record.
pub fn theory_record(
    params: &ModelParams,
    c0: f64,
    t_end: f64,
    points: usize,
) -> Result<RunRecord> {
    let lp = LogisticParams::new(params.zeta, params.tau_infinity, c0)?;
    let (ts, cs) = closed_form_trajectory(&lp, t_end, points)?;
    let series = ts
        .iter()
        .zip(&cs)
        .map(|(&t, &c)| SeriesRow {
            t,
            top1_share: c,
            top_eps_share: f64::NAN,
            gini_full: f64::NAN,
            gini_classical: f64::NAN,
            wealth_residual: 0.0,
            clipped_bias_count: 0,
        })
        .collect();
    Ok(RunRecord {
        engine: EngineKind::Theory,
        params: params.clone(),
        seed: None,
        stream_id: None,
        series,
        lorenz: Vec::new(),
        final_wealths: None,
        grid_snapshots: Vec::new(),
        summary: Default::default(),
        flags: Vec::new(),
    })
}

fn run_job(plan: &SweepPlan, cell: &CellSpec, c: usize, s: usize) -> JobOutcome {
    let stream_id = job_stream_id(c, s);
    let directory = format!("jobs/cell{c:04}_seed{s:03}");
    let mut outcome = JobOutcome {
        cell: c,
        seed_index: s,
        stream_id,
        directory: directory.clone(),
        terminal_top1: None,
        terminal_gini: None,
        rate_hat: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        let record = run_cell(plan, cell, c, s)?;
        let dir = plan.output_dir.join(&directory);
        let files = record.write_data(&dir)?;
        let config = serde_json::json!({
            "cell": cell,
            "cell_index": c,
            "seed_index": s,
            "engine": plan.engine,
            "initial": plan.initial,
            "mean_wealth": plan.mean_wealth,
            "records_per_run": plan.records_per_run,
            "fp": plan.fp,
        });
        let mut manifest = record.manifest(config, files);
        manifest.kind = "sweep_job".to_string();
        manifest.write(&dir.join("manifest.json"))?;
        outcome.terminal_top1 = Some(record.tail_mean_top1(plan.window_fraction));
        outcome.terminal_gini = Some(record.tail_mean(plan.window_fraction, |r| r.gini_full));
        let (ts, cs): (Vec<f64>, Vec<f64>) =
            record.series.iter().map(|r| (r.t, r.top1_share)).unzip();
        outcome.rate_hat = fit_logistic(&ts, &cs).ok().map(|f| f.rate_hat);
        Ok(())
    })();
    if let Err(e) = result {
        outcome.error = Some(e.to_string());
    }
    outcome
}

fn aggregate_cell(plan: &SweepPlan, cell: &CellSpec, jobs: &[JobOutcome]) -> CellAggregate {
    let params = cell.params(plan.mean_wealth * cell.n_agents as f64);
    let ok: Vec<&JobOutcome> = jobs.iter().filter(|j| j.error.is_none()).collect();
    let tops: Vec<f64> = ok.iter().filter_map(|j| j.terminal_top1).collect();
    let ginis: Vec<f64> = ok.iter().filter_map(|j| j.terminal_gini).collect();
    let rates: Vec<f64> = ok.iter().filter_map(|j| j.rate_hat).collect();
    let (mean_top1, se_top1) = mean_se(&tops);
    let c_theory = c_infinity(params.zeta, params.tau_infinity).unwrap_or(f64::NAN);
    CellAggregate {
        zeta: cell.zeta,
        tau: params.tau_infinity,
        n_agents: cell.n_agents,
        seeds: ok.len(),
        mean_top1,
        se_top1,
        mean_gini: mean_se(&ginis).0,
        c_theory,
        abs_error: (mean_top1 - c_theory).abs(),
        mean_rate_hat: mean_se(&rates).0,
        failed: jobs.len() - ok.len(),
    }
}

/// Sample mean and standard error of the mean; the error is 0 for one value.
pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn write_aggregate(path: &Path, cells: &[CellAggregate]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    wtr.write_record(AGGREGATE_HEADER)?;
    for c in cells {
        wtr.write_record([
            c.zeta.to_string(),
            c.tau.to_string(),
            c.n_agents.to_string(),
            c.seeds.to_string(),
            c.mean_top1.to_string(),
            c.se_top1.to_string(),
            c.mean_gini.to_string(),
            c.c_theory.to_string(),
            c.abs_error.to_string(),
            c.mean_rate_hat.to_string(),
            c.failed.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Manifest of a whole sweep, written beside the aggregate table.
pub fn sweep_manifest(plan: &SweepPlan, result: &SweepResult) -> Manifest {
    let mut m = Manifest::new("sweep", serde_json::to_value(plan).unwrap_or_default());
    m.files = vec!["aggregate.csv".into(), "summary.json".into()];
    m.files.extend(
        result
            .jobs
            .iter()
            .map(|j| format!("{}/manifest.json", j.directory)),
    );
    m.flags = result
        .jobs
        .iter()
        .filter_map(|j| j.error.as_ref().map(|e| format!("{}: {e}", j.directory)))
        .collect();
    m
}

/// Least-squares fit of `c' = r c - s c^2`, i.e.
/// `c(t) = c0 e^{rt} / (1 + s c0 (e^{rt} - 1) / r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// `r / s` when `r > 0`, otherwise 0.
    pub c_inf_hat: f64,
    /// Composite rate `r`, which equals `zeta - tau_infinity`.
    pub rate_hat: f64,
    pub c0_hat: f64,
    /// Quadratic coefficient `s`, which equals `zeta`.
    pub quadratic_hat: f64,
    pub rms_residual: f64,
    /// Series varying by at most 1e-12: a flat fit with rate 0.
    pub degenerate: bool,
}

/// Logistic trajectory with initial value `c0`, linear rate `r` and quadratic
/// coefficient `s`.
pub fn logistic_model(t: f64, c0: f64, r: f64, s: f64) -> f64 {
    let rt = r * t;
    if rt > 30.0 {
        let decay = (-rt).exp();
        // Divide through by e^{rt} to avoid overflow.
        return c0 / (decay + s * c0 * (1.0 - decay) / r);
    }
    let growth = if rt.abs() < 1e-8 {
        t * (1.0 + 0.5 * rt)
    } else {
        rt.exp_m1() / r
    };
    c0 * rt.exp() / (1.0 + s * c0 * growth)
}

pub fn fit_logistic(ts: &[f64], cs: &[f64]) -> Result<LogisticFit> {
    let n = ts.len();
    if n != cs.len() {
        return domain("time and value series differ in length");
    }
    if n < 10 {
        return domain(format!(
            "a logistic fit needs at least 10 samples (got {n})"
        ));
    }
    if ts.windows(2).any(|w| !(w[1] > w[0])) || ts.iter().any(|t| !t.is_finite()) {
        return domain("sample times must be finite and increasing");
    }
    if let Some(c) = cs.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return domain(format!("value {c} outside [0, 1]"));
    }
    let mean = cs.iter().sum::<f64>() / n as f64;
    let spread = cs.iter().fold(0.0f64, |m, c| m.max((c - mean).abs()));
    if spread <= 1e-12 {
        return Ok(LogisticFit {
            c_inf_hat: mean,
            rate_hat: 0.0,
            c0_hat: mean,
            quadratic_hat: 0.0,
            rms_residual: 0.0,
            degenerate: true,
        });
    }

    let t0 = ts[0];
    let rel: Vec<f64> = ts.iter().map(|t| t - t0).collect();
    let sse = |p: &[f64; 3]| -> f64 {
        rel.iter()
            .zip(cs)
            .map(|(&t, &c)| (logistic_model(t, p[0], p[1], p[2]) - c).powi(2))
            .sum()
    };

    let mut best = initial_guess(&rel, cs, &sse);
    let mut best_sse = sse(&best);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let (jtj, jtr) = normal_equations(&rel, cs, &best);
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj;
            for k in 0..3 {
                a[k][k] += lambda * jtj[k][k].max(1e-300);
            }
            let Some(step) = solve3(a, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [best[0] + step[0], best[1] + step[1], best[2] + step[2]];
            let trial_sse = if trial[0] > 0.0 {
                sse(&trial)
            } else {
                f64::INFINITY
            };
            if trial_sse.is_finite() && trial_sse <= best_sse {
                let small = (0..3).all(|k| step[k].abs() <= 1e-14 * (1.0 + best[k].abs()));
                let gain = best_sse - trial_sse;
                best = trial;
                best_sse = trial_sse;
                lambda = (lambda * 0.3).max(1e-15);
                improved = !(small || gain <= 1e-30 + 1e-15 * trial_sse);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }

    let (c0, r, s) = (best[0], best[1], best[2]);
    let c_inf = if r > 0.0 && s > 0.0 { r / s } else { 0.0 };
    Ok(LogisticFit {
        c_inf_hat: c_inf,
        rate_hat: r,
        c0_hat: c0,
        quadratic_hat: s,
        rms_residual: (best_sse / n as f64).sqrt(),
        degenerate: false,
    })
}

/// Deterministic start: `c0` from the first sample, the plateau from the last, and
/// the rate chosen by scanning a log-spaced grid.
fn initial_guess(ts: &[f64], cs: &[f64], sse: &dyn Fn(&[f64; 3]) -> f64) -> [f64; 3] {
    let n = cs.len();
    let span = ts[n - 1].max(f64::MIN_POSITIVE);
    let head = cs[..(n / 10).max(1)].iter().sum::<f64>() / (n / 10).max(1) as f64;
    let c0 = cs[0].max(head * 1e-3).max(1e-12);
    let tail_len = (n / 10).max(1);
    let plateau = cs[n - tail_len..].iter().sum::<f64>() / tail_len as f64;
    let mut best = [c0, 0.0, 0.0];
    let mut best_sse = sse(&best);
    for k in 0..=80 {
        let mag = 1e-3 / span * 10f64.powf(k as f64 * 0.1);
        for sign in [1.0, -1.0] {
            let r = sign * mag;
            let s = if r > 0.0 && plateau > c0 {
                r / plateau
            } else {
                0.0
            };
            let p = [c0, r, s];
            let e = sse(&p);
            if e < best_sse {
                best = p;
                best_sse = e;
            }
        }
    }
    best
}

fn normal_equations(ts: &[f64], cs: &[f64], p: &[f64; 3]) -> ([[f64; 3]; 3], [f64; 3]) {
    let mut jtj = [[0.0; 3]; 3];
    let mut jtr = [0.0; 3];
    let h: [f64; 3] = std::array::from_fn(|k| 1e-7 * p[k].abs().max(1e-7));
    for (&t, &c) in ts.iter().zip(cs) {
        let f = logistic_model(t, p[0], p[1], p[2]);
        let mut j = [0.0; 3];
        for k in 0..3 {
            let mut hi = *p;
            let mut lo = *p;
            hi[k] += h[k];
            lo[k] -= h[k];
            j[k] = (logistic_model(t, hi[0], hi[1], hi[2])
                - logistic_model(t, lo[0], lo[1], lo[2]))
                / (2.0 * h[k]);
        }
        let resid = c - f;
        for a in 0..3 {
            jtr[a] += j[a] * resid;
            for b in 0..3 {
                jtj[a][b] += j[a] * j[b];
            }
        }
    }
    (jtj, jtr)
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if !(d.is_finite() && d != 0.0) {
        return None;
    }
    let mut x = [0.0; 3];
    for k in 0..3 {
        let mut m = a;
        for r in 0..3 {
            m[r][k] = b[r];
        }
        x[k] = det(&m) / d;
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::logistic_closed_form;

    #[test]
    fn model_matches_closed_form() {
        let p = LogisticParams::new(0.3, 0.1, 0.05).unwrap();
        for t in [0.0, 1.0, 10.0, 100.0, 400.0] {
            let a = logistic_model(t, 0.05, 0.2, 0.3);
            let b = logistic_closed_form(&p, t).unwrap();
            assert!((a - b).abs() < 1e-14, "t={t}: {a} vs {b}");
        }
        let crit = LogisticParams::new(0.1, 0.1, 0.5).unwrap();
        let a = logistic_model(20.0, 0.5, 0.0, 0.1);
        assert!((a - logistic_closed_form(&crit, 20.0).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn self_fit_recovers_parameters() {
        for (zeta, tau, c0) in [(0.3, 0.1, 0.05), (0.2, 0.1, 0.01), (1.0, 0.3, 0.4)] {
            let p = LogisticParams::new(zeta, tau, c0).unwrap();
            let (ts, cs) = closed_form_trajectory(&p, 60.0 / (zeta - tau), 200).unwrap();
            let fit = fit_logistic(&ts, &cs).unwrap();
            let c_inf = 1.0 - tau / zeta;
            assert!(((fit.c_inf_hat - c_inf) / c_inf).abs() < 1e-6, "{fit:?}");
            assert!(
                ((fit.rate_hat - (zeta - tau)) / (zeta - tau)).abs() < 1e-6,
                "{fit:?}"
            );
            assert!(((fit.c0_hat - c0) / c0).abs() < 1e-6, "{fit:?}");
            assert!(fit.rms_residual < 1e-10);
            assert!(!fit.degenerate);
        }
    }

    #[test]
    fn flat_series_is_flagged() {
        let ts: Vec<f64> = (0..20).map(|k| k as f64).collect();
        let fit = fit_logistic(&ts, &[0.0; 20]).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.rate_hat, 0.0);
        let fit = fit_logistic(&ts, &[0.3; 20]).unwrap();
        assert!(fit.degenerate);
        assert!((fit.c_inf_hat - 0.3).abs() < 1e-15);
    }

    #[test]
    fn fit_preconditions() {
        let ts: Vec<f64> = (0..5).map(|k| k as f64).collect();
        assert!(fit_logistic(&ts, &[0.1; 5]).is_err());
        let ts: Vec<f64> = (0..12).map(|k| k as f64).collect();
        let mut cs = vec![0.1; 12];
        cs[3] = 1.5;
        assert!(fit_logistic(&ts, &cs).is_err());
    }

    #[test]
    fn mean_se_values() {
        assert_eq!(mean_se(&[2.0]), (2.0, 0.0));
        let (m, se) = mean_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn plan_validation_aggregates() {
        let plan = SweepPlan::from_json(
            r#"{"engine": "mc", "seeds": 0, "output_dir": "x",
                "cells": [{"zeta": -1, "tau": 0.1, "n_agents": 10, "dt": 2.0, "t_end": 1}]}"#,
        );
        let Err(Error::InvalidParams(list)) = plan else {
            panic!("expected aggregated errors");
        };
        assert!(list.len() >= 3, "{list:?}");
    }

    #[test]
    fn grid_expansion_order() {
        let plan = SweepPlan::from_json(
            r#"{"engine": "theory", "output_dir": "x",
                "grid": {"zeta": [0.1, 0.2], "tau": [0.05], "n_agents": [10, 20], "dt": [0.01], "t_end": [5]}}"#,
        )
        .unwrap();
        let cells = plan.expand_cells();
        assert_eq!(cells.len(), 4);
        assert_eq!((cells[1].zeta, cells[1].n_agents), (0.1, 20));
        assert_eq!((cells[2].zeta, cells[2].n_agents), (0.2, 10));
    }
}
