//! Agent-based Monte Carlo of the biased yard-sale walk with taxation and
//! redistribution.
//!
//! One step pairs the agents, lets every pair exchange `eta * sqrt(dt) * min(z, x)`
//! with a coin biased toward the wealthier side, then applies the net tax
//! `-(rho(z) z - T / N) dt` to every agent, where `T` is collected from the pre-step
//! wealths. Negative wealths are clamped to zero and the deficit is taken
//! proportionally from the remaining agents, so the total is conserved up to rounding.

use serde::{Deserialize, Serialize};

use crate::analytics::{gini_of_sorted, lorenz_curve, LorenzCurve};
use crate::error::{domain, Error, Result};
use crate::model::{ModelParams, Population, WealthDistribution};
use crate::record::{EngineKind, RunRecord, RunSummary, SeriesRow};
use crate::rng::RngStream;

/// Runs whose clipped-transaction fraction exceeds this are flagged.
pub const CLIP_FLAG_FRACTION: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingMode {
    /// Uniform random perfect matching; with odd `N` one uniform agent sits out.
    #[default]
    Matching,
    /// `N / 2` independently drawn pairs, agents may repeat.
    Sampled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxMode {
    /// One taxation of the whole population per pairing sweep.
    #[default]
    PerSweep,
    /// Tax everyone after each transaction with `dt / pairs`; costs `O(N^2)` per sweep.
    PerTransaction,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineOptions {
    #[serde(default)]
    pub pairing: PairingMode,
    #[serde(default)]
    pub tax_mode: TaxMode,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    pub time: f64,
    pub n_transactions: u64,
    pub clipped_bias_count: u64,
    pub clamped_wealth_count: u64,
    /// Relative deviation of the total wealth from its initial value after this step.
    pub wealth_residual: f64,
}

/// Uniform random perfect matching of the population's agents.
pub fn transaction_pairing(pop: &Population, rng: &mut RngStream) -> Result<Vec<(usize, usize)>> {
    let n = pop.len();
    if n < 2 {
        return domain("pairing needs at least two agents");
    }
    let mut perm: Vec<usize> = (0..n).collect();
    shuffle(&mut perm, rng);
    Ok(perm.chunks_exact(2).map(|p| (p[0], p[1])).collect())
}

/// `n / 2` pairs of distinct agents drawn with replacement across pairs.
pub fn sampled_pairs(n: usize, rng: &mut RngStream) -> Result<Vec<(usize, usize)>> {
    if n < 2 {
        return domain("pairing needs at least two agents");
    }
    Ok((0..n / 2).map(|_| sample_pair(n, rng)).collect())
}

#[inline]
fn sample_pair(n: usize, rng: &mut RngStream) -> (usize, usize) {
    let a = rng.index(n);
    let mut b = rng.index(n - 1);
    if b >= a {
        b += 1;
    }
    (a, b)
}

fn shuffle(perm: &mut [usize], rng: &mut RngStream) {
    for i in (1..perm.len()).rev() {
        let j = rng.index(i + 1);
        perm.swap(i, j);
    }
}

/// Probability that the agent holding `z` wins against `x`, and whether the bias
/// `zeta (N/W) sqrt(dt) (z - x)` had to be clipped to `[-1, 1]`.
#[inline]
pub fn win_probability(z: f64, x: f64, params: &ModelParams) -> (f64, bool) {
    let coef = params.zeta * params.n_agents as f64 / params.total_wealth * params.sqrt_dt();
    bias_probability(coef * (z - x))
}

#[inline]
fn bias_probability(b: f64) -> (f64, bool) {
    let clipped = b.abs() > 1.0;
    (0.5 * (1.0 + b.clamp(-1.0, 1.0)), clipped)
}

/// Outcome of one biased coin: `eta = +1` means the agent with wealth `z` wins.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Toss {
    pub eta: f64,
    pub clipped: bool,
}

pub fn biased_coin(z: f64, x: f64, params: &ModelParams, rng: &mut RngStream) -> Toss {
    let (p, clipped) = win_probability(z, x, params);
    Toss {
        eta: if rng.uniform() < p { 1.0 } else { -1.0 },
        clipped,
    }
}

/// Stepper holding the parameters, the random stream and scratch buffers.
pub struct Engine {
    params: ModelParams,
    options: EngineOptions,
    rng: RngStream,
    bias_coef: f64,
    stake: f64,
    constant_rho: Option<f64>,
    perm: Vec<usize>,
    tax: Vec<f64>,
    steps: u64,
}

impl Engine {
    pub fn new(params: ModelParams, options: EngineOptions, rng: RngStream) -> Result<Self> {
        params.validate()?;
        if params.n_agents < 2 {
            return Err(Error::InvalidParams(vec![
                "the Monte Carlo engine needs at least two agents".into(),
            ]));
        }
        let n = params.n_agents;
        let constant_rho = match (params.tax.as_constant(), params.sigma.as_constant()) {
            (Some(t), Some(s)) => Some(t - s),
            _ => None,
        };
        Ok(Engine {
            bias_coef: params.zeta * n as f64 / params.total_wealth * params.sqrt_dt(),
            stake: params.sqrt_dt(),
            constant_rho,
            perm: (0..n).collect(),
            tax: vec![0.0; n],
            steps: 0,
            params,
            options,
            rng,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn rng(&self) -> &RngStream {
        &self.rng
    }

    /// Advances `pop` by one step of `dt`.
    pub fn step(&mut self, pop: &mut Population) -> Result<StepReport> {
        let n = pop.len();
        if n != self.params.n_agents {
            return domain(format!(
                "population has {n} agents, parameters declare {}",
                self.params.n_agents
            ));
        }
        let mut report = match self.options.tax_mode {
            TaxMode::PerSweep => self.sweep_then_tax(pop.wealths_mut()),
            TaxMode::PerTransaction => self.tax_each_transaction(pop.wealths_mut()),
        };
        report.clamped_wealth_count = clamp_negative(pop.wealths_mut());
        self.steps += 1;
        pop.time = self.steps as f64 * self.params.dt;
        report.time = pop.time;
        report.wealth_residual = pop.conservation_residual();
        Ok(report)
    }

    fn collect_tax(&mut self, w: &[f64]) -> f64 {
        let mut total = 0.0;
        match self.constant_rho {
            Some(rho) => {
                for (t, &x) in self.tax.iter_mut().zip(w) {
                    *t = rho * x;
                    total += *t;
                }
            }
            None => {
                for (t, &x) in self.tax.iter_mut().zip(w) {
                    *t = self.params.rho(x) * x;
                    total += *t;
                }
            }
        }
        total
    }

    fn sweep_then_tax(&mut self, w: &mut [f64]) -> StepReport {
        let n = w.len();
        let share = self.collect_tax(w) / n as f64;
        let mut report = StepReport::default();
        self.draw_pairs();
        for k in 0..self.pair_count(n) {
            let (a, b) = self.pair(k, n);
            report.n_transactions += 1;
            if self.exchange(w, a, b) {
                report.clipped_bias_count += 1;
            }
        }
        let dt = self.params.dt;
        for (x, t) in w.iter_mut().zip(&self.tax) {
            *x -= (t - share) * dt;
        }
        report
    }

    fn tax_each_transaction(&mut self, w: &mut [f64]) -> StepReport {
        let n = w.len();
        let mut report = StepReport::default();
        self.draw_pairs();
        let pairs = self.pair_count(n);
        let slice = self.params.dt / pairs as f64;
        for k in 0..pairs {
            let (a, b) = self.pair(k, n);
            report.n_transactions += 1;
            if self.exchange(w, a, b) {
                report.clipped_bias_count += 1;
            }
            let share = self.collect_tax(w) / n as f64;
            for (x, t) in w.iter_mut().zip(&self.tax) {
                *x -= (t - share) * slice;
            }
        }
        report
    }

    fn draw_pairs(&mut self) {
        if self.options.pairing == PairingMode::Matching {
            shuffle(&mut self.perm, &mut self.rng);
        }
    }

    fn pair_count(&self, n: usize) -> usize {
        n / 2
    }

    #[inline]
    fn pair(&mut self, k: usize, n: usize) -> (usize, usize) {
        match self.options.pairing {
            PairingMode::Matching => (self.perm[2 * k], self.perm[2 * k + 1]),
            PairingMode::Sampled => sample_pair(n, &mut self.rng),
        }
    }

    /// Returns whether the bias was clipped.
    #[inline]
    fn exchange(&mut self, w: &mut [f64], a: usize, b: usize) -> bool {
        let (z, x) = (w[a], w[b]);
        let (p, clipped) = bias_probability(self.bias_coef * (z - x));
        let amount = self.stake * z.min(x);
        if self.rng.uniform() < p {
            w[a] += amount;
            w[b] -= amount;
        } else {
            w[a] -= amount;
            w[b] += amount;
        }
        clipped
    }
}

/// Sets negative wealths to zero and removes the deficit proportionally from the
/// other agents. Returns the number of agents clamped.
fn clamp_negative(w: &mut [f64]) -> u64 {
    let mut deficit = 0.0;
    let mut clamped = 0;
    for x in w.iter_mut() {
        if *x < 0.0 {
            deficit -= *x;
            *x = 0.0;
            clamped += 1;
        }
    }
    if deficit > 0.0 {
        let positive: f64 = w.iter().sum();
        let keep = 1.0 - deficit / positive;
        w.iter_mut().for_each(|x| *x *= keep);
    }
    clamped
}

/// Starting wealths of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    #[default]
    Equal,
    /// Agent 0 holds `c0 W`, the rest share the remainder equally.
    Oligarch { c0: f64 },
    /// Independent exponential draws rescaled to the total.
    Exponential,
}

impl InitialCondition {
    /// Builds the population. Exponential draws use stream `stream_id` with the top
    /// bit set so they never overlap the dynamics stream.
    pub fn build(&self, n: usize, total: f64, seed: u64, stream_id: u64) -> Result<Population> {
        match *self {
            InitialCondition::Equal => Population::equal(n, total),
            InitialCondition::Oligarch { c0 } => Population::with_oligarch(n, total, c0),
            InitialCondition::Exponential => {
                let mut rng = RngStream::new(seed, stream_id | 1 << 63);
                Population::exponential(n, total, rng.inner())
            }
        }
    }

    /// Initial condensed fraction implied by the condition.
    pub fn c0(&self) -> f64 {
        match *self {
            InitialCondition::Oligarch { c0 } => c0,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TopGroup {
    /// The single richest agent.
    Single,
    /// The richest `ceil(eps * N)` agents.
    Fraction(f64),
}

/// Fraction of the total wealth held by the richest agents.
pub fn top_share(pop: &Population, group: TopGroup) -> Result<f64> {
    let sorted = pop.sorted();
    top_share_sorted(&sorted, pop.total(), group)
}

fn top_share_sorted(sorted: &[f64], total: f64, group: TopGroup) -> Result<f64> {
    let n = sorted.len();
    if n == 0 {
        return domain("top share of an empty population");
    }
    let k = match group {
        TopGroup::Single => 1,
        TopGroup::Fraction(eps) => {
            if !(eps > 0.0 && eps <= 1.0) {
                return domain(format!("epsilon must lie in (0, 1] (got {eps})"));
            }
            ((eps * n as f64).ceil() as usize).clamp(1, n)
        }
    };
    Ok(sorted[n - k..].iter().sum::<f64>() / total)
}

/// Hook called on the recording cadence with the current state.
pub trait Observer {
    fn observe(&mut self, observation: &Observation<'_>) -> std::result::Result<(), String>;
}

pub struct Observation<'a> {
    pub step: u64,
    pub population: &'a Population,
    pub report: &'a StepReport,
    pub row: &'a SeriesRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    pub t_end: f64,
    /// Record observables and call observers every this many steps.
    pub record_every: u64,
    /// Lorenz snapshot cadence in steps; the final state is always captured.
    #[serde(default)]
    pub lorenz_every: Option<u64>,
    /// Group size for `top_eps_share`.
    pub epsilon: f64,
    #[serde(default)]
    pub engine: EngineOptions,
}

impl SimulationOptions {
    pub fn new(t_end: f64) -> Self {
        SimulationOptions {
            t_end,
            record_every: 100,
            lorenz_every: None,
            epsilon: 0.01,
            engine: EngineOptions::default(),
        }
    }
}

/// Steps `init` until `t_end` and records the observables.
pub fn simulate(
    params: &ModelParams,
    init: Population,
    rng: RngStream,
    opts: &SimulationOptions,
    observers: &mut [&mut dyn Observer],
) -> Result<RunRecord> {
    if !(opts.t_end > 0.0) {
        return domain(format!("t_end must be positive (got {})", opts.t_end));
    }
    if opts.record_every == 0 {
        return domain("record_every must be at least 1");
    }
    if !(opts.epsilon > 0.0 && opts.epsilon <= 1.0) {
        return domain(format!("epsilon must lie in (0, 1] (got {})", opts.epsilon));
    }
    if (init.total() - params.total_wealth).abs() > 1e-9 * params.total_wealth {
        return domain(format!(
            "initial wealth {} differs from declared total {}",
            init.total(),
            params.total_wealth
        ));
    }
    let seed = rng.seed();
    let stream_id = rng.stream_id();
    let mut engine = Engine::new(params.clone(), opts.engine, rng)?;
    let mut pop = init;
    let n_steps = (opts.t_end / params.dt - 1e-9).ceil() as u64;

    let mut series = Vec::new();
    let mut lorenz: Vec<(f64, LorenzCurve)> = Vec::new();
    let mut summary = RunSummary::default();
    let mut last_report = StepReport::default();

    let row0 = observe_row(&pop, opts.epsilon, 0)?;
    series.push(row0);
    notify(observers, 0, &pop, &last_report, &row0)?;

    for step in 1..=n_steps {
        last_report = engine.step(&mut pop)?;
        summary.steps = step;
        summary.transactions += last_report.n_transactions;
        summary.clipped_bias += last_report.clipped_bias_count;
        summary.clamped_wealth += last_report.clamped_wealth_count;
        summary.max_abs_wealth_residual = summary
            .max_abs_wealth_residual
            .max(last_report.wealth_residual.abs());

        let is_last = step == n_steps;
        if step % opts.record_every == 0 || is_last {
            let row = observe_row(&pop, opts.epsilon, summary.clipped_bias)?;
            series.push(row);
            notify(observers, step, &pop, &last_report, &row)?;
        }
        if opts.lorenz_every.is_some_and(|k| k > 0 && step % k == 0) || is_last {
            lorenz.push((
                pop.time,
                lorenz_curve(&WealthDistribution::from_population(&pop)?)?,
            ));
        }
    }

    summary.clip_fraction = if summary.transactions > 0 {
        summary.clipped_bias as f64 / summary.transactions as f64
    } else {
        0.0
    };
    let mut flags = Vec::new();
    if summary.clip_fraction > CLIP_FLAG_FRACTION {
        flags.push(format!(
            "bias clipped in {:.4}% of transactions (threshold {}%)",
            100.0 * summary.clip_fraction,
            100.0 * CLIP_FLAG_FRACTION
        ));
    }
    if summary.clamped_wealth > 0 {
        flags.push(format!(
            "{} negative wealths clamped to zero",
            summary.clamped_wealth
        ));
    }
    Ok(RunRecord {
        engine: EngineKind::Mc,
        params: params.clone(),
        seed: Some(seed),
        stream_id: Some(stream_id),
        series,
        lorenz,
        final_wealths: Some(pop.wealths().to_vec()),
        grid_snapshots: Vec::new(),
        summary,
        flags,
    })
}

fn notify(
    observers: &mut [&mut dyn Observer],
    step: u64,
    pop: &Population,
    report: &StepReport,
    row: &SeriesRow,
) -> Result<()> {
    for obs in observers.iter_mut() {
        let observation = Observation {
            step,
            population: pop,
            report,
            row,
        };
        if let Err(message) = obs.observe(&observation) {
            return Err(Error::Observer {
                message,
                last_state: Box::new(pop.clone()),
            });
        }
    }
    Ok(())
}

fn observe_row(pop: &Population, epsilon: f64, clipped: u64) -> Result<SeriesRow> {
    let sorted = pop.sorted();
    let total: f64 = sorted.iter().sum();
    let n = sorted.len();
    let richest = sorted[n - 1];
    let rest = total - richest;
    let gini_classical = if n >= 2 && rest > 0.0 {
        gini_of_sorted(&sorted[..n - 1], rest)
    } else {
        0.0
    };
    Ok(SeriesRow {
        t: pop.time,
        top1_share: richest / total,
        top_eps_share: top_share_sorted(&sorted, total, TopGroup::Fraction(epsilon))?,
        gini_full: gini_of_sorted(&sorted, total),
        gini_classical,
        wealth_residual: pop.conservation_residual(),
        clipped_bias_count: clipped,
    })
}
