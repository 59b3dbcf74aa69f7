//! Run configuration assembled from an optional JSON file and command-line flags.
//! Flags take precedence over file values; every problem is reported at once.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ysm_core::fokker_planck::{GridSpec, Spacing, MIN_SPAN_IN_MEANS};
use ysm_core::mc::{EngineOptions, InitialCondition, PairingMode, SimulationOptions, TaxMode};
use ysm_core::{Error, ModelParams, RateSchedule};

use crate::Failure;

/// Every field is optional here; `resolve_*` decides what is required.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Wealth-attained advantage strength.
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Constant tax rate.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Tax schedule as JSON, e.g. '{"kind":"step","threshold":2,"below":0,"above":0.2}'.
    #[arg(long, value_parser = parse_schedule)]
    pub tax: Option<RateSchedule>,
    /// Redistribution deviation schedule as JSON.
    #[arg(long, value_parser = parse_schedule)]
    pub sigma: Option<RateSchedule>,
    /// Number of agents.
    #[arg(long)]
    pub agents: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Total wealth; defaults to one unit per agent.
    #[arg(long)]
    pub total_wealth: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random stream under the seed.
    #[arg(long)]
    pub stream: Option<u64>,
    /// Start with one agent holding this fraction of the wealth.
    #[arg(long)]
    pub c0: Option<f64>,
    /// Initial condition: equal, exponential or oligarch (needs --c0).
    #[arg(long)]
    pub initial: Option<String>,
    /// Steps between recorded rows.
    #[arg(long)]
    pub record_every: Option<u64>,
    /// Steps between Lorenz snapshots.
    #[arg(long)]
    pub lorenz_every: Option<u64>,
    /// Population fraction for the top-share column.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// matching or sampled.
    #[arg(long)]
    pub pairing: Option<String>,
    /// per_sweep or per_transaction.
    #[arg(long)]
    pub tax_mode: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fokker-Planck bins.
    #[arg(long)]
    pub bins: Option<usize>,
    /// Fokker-Planck ratio of the widest to the narrowest bin; 1 gives a uniform grid.
    #[arg(long)]
    pub growth: Option<f64>,
    /// Fokker-Planck grid span in mean wealths.
    #[arg(long)]
    pub span_in_means: Option<f64>,
    /// Fokker-Planck time between recorded rows.
    #[arg(long)]
    pub record_interval: Option<f64>,
    /// Fokker-Planck time between grid snapshots.
    #[arg(long)]
    pub snapshot_every: Option<f64>,
    /// Fokker-Planck upper limit on the solver step.
    #[arg(long)]
    pub dt_max: Option<f64>,
}

fn parse_schedule(s: &str) -> Result<RateSchedule, String> {
    serde_json::from_str(s).map_err(|e| format!("invalid schedule: {e}"))
}

macro_rules! overlay {
    ($flags:expr, $file:expr, $($f:ident),*) => {
        RunConfig { $($f: $flags.$f.clone().or_else(|| $file.$f.clone()),)* }
    };
}

impl RunConfig {
    pub fn load(path: Option<&Path>, flags: &RunConfig) -> Result<RunConfig, Failure> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::Config(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str::<RunConfig>(&text)
                    .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        Ok(overlay!(
            flags,
            file,
            zeta,
            tau,
            tax,
            sigma,
            agents,
            dt,
            t_end,
            total_wealth,
            seed,
            stream,
            c0,
            initial,
            record_every,
            lorenz_every,
            epsilon,
            pairing,
            tax_mode,
            out,
            bins,
            growth,
            span_in_means,
            record_interval,
            snapshot_every,
            dt_max
        ))
    }
}

/// Fully specified Monte Carlo run.
#[derive(Clone, Debug, Serialize)]
pub struct McRun {
    pub params: ModelParams,
    pub initial: InitialCondition,
    pub seed: u64,
    pub stream: u64,
    pub options: SimulationOptions,
    pub out: PathBuf,
}

/// Fully specified Fokker-Planck run.
#[derive(Clone, Debug, Serialize)]
pub struct FpRun {
    pub params: ModelParams,
    pub grid: GridSpec,
    pub c0: f64,
    pub t_end: f64,
    pub record_interval: f64,
    pub snapshot_every: Option<f64>,
    pub dt_max: Option<f64>,
    pub epsilon: f64,
    pub out: PathBuf,
}

struct Collector(Vec<String>);

impl Collector {
    fn need<T: Clone>(&mut self, v: &Option<T>, name: &str) -> Option<T> {
        if v.is_none() {
            self.0.push(format!(
                "missing required field `{name}` (--{})",
                name.replace('_', "-")
            ));
        }
        v.clone()
    }

    fn finish(self) -> Result<(), Failure> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(Failure::Config(self.0.join("\n")))
        }
    }
}

fn model_params(
    cfg: &RunConfig,
    c: &mut Collector,
    default_dt: Option<f64>,
) -> Option<ModelParams> {
    let zeta = c.need(&cfg.zeta, "zeta");
    let tax = match (&cfg.tax, cfg.tau) {
        (Some(s), _) => Some(s.clone()),
        (None, Some(t)) => Some(RateSchedule::constant(t)),
        (None, None) => {
            c.0.push("missing required field `tau` (--tau) or `tax` (--tax)".to_string());
            None
        }
    };
    let agents = c.need(&cfg.agents, "agents");
    let dt = match default_dt {
        Some(d) => Some(cfg.dt.unwrap_or(d)),
        None => c.need(&cfg.dt, "dt"),
    };
    let (zeta, tax, agents, dt) = (zeta?, tax?, agents?, dt?);
    let sigma = cfg.sigma.clone().unwrap_or_default();
    let params = ModelParams {
        zeta,
        tau_infinity: tax.limit() - sigma.limit(),
        tax,
        sigma,
        dt,
        n_agents: agents,
        total_wealth: cfg.total_wealth.unwrap_or(agents as f64),
    };
    if let Err(Error::InvalidParams(list)) = params.validate() {
        c.0.extend(list);
        return None;
    }
    Some(params)
}

fn parse_choice<T: for<'de> Deserialize<'de>>(
    v: &Option<String>,
    name: &str,
    c: &mut Collector,
) -> Option<T> {
    let s = v.as_ref()?;
    match serde_json::from_value(serde_json::Value::String(s.clone())) {
        Ok(x) => Some(x),
        Err(_) => {
            c.0.push(format!("unknown {name} `{s}`"));
            None
        }
    }
}

fn initial_condition(cfg: &RunConfig, c: &mut Collector) -> InitialCondition {
    match (cfg.initial.as_deref(), cfg.c0) {
        (None, None) | (Some("equal"), None) => InitialCondition::Equal,
        (None, Some(c0)) | (Some("oligarch"), Some(c0)) => {
            if !(0.0..1.0).contains(&c0) {
                c.0.push(format!("c0 must lie in [0, 1) (got {c0})"));
            }
            InitialCondition::Oligarch { c0 }
        }
        (Some("exponential"), None) => InitialCondition::Exponential,
        (Some("oligarch"), None) => {
            c.0.push("initial condition `oligarch` needs --c0".to_string());
            InitialCondition::Equal
        }
        (Some(other), _) => {
            c.0.push(format!(
                "initial condition `{other}` is not one of equal, exponential, oligarch (or conflicts with --c0)"
            ));
            InitialCondition::Equal
        }
    }
}

pub fn resolve_mc(cfg: &RunConfig) -> Result<McRun, Failure> {
    let mut c = Collector(Vec::new());
    let params = model_params(cfg, &mut c, None);
    let t_end = c.need(&cfg.t_end, "t_end");
    let seed = c.need(&cfg.seed, "seed");
    let out = c.need(&cfg.out, "out");
    let initial = initial_condition(cfg, &mut c);
    let pairing: Option<PairingMode> = parse_choice(&cfg.pairing, "pairing", &mut c);
    let tax_mode: Option<TaxMode> = parse_choice(&cfg.tax_mode, "tax mode", &mut c);
    if let Some(t) = t_end {
        if !(t > 0.0) {
            c.0.push(format!("t_end must be positive (got {t})"));
        }
    }
    let epsilon = cfg.epsilon.unwrap_or(0.01);
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        c.0.push(format!("epsilon must lie in (0, 1] (got {epsilon})"));
    }
    if cfg.record_every == Some(0) {
        c.0.push("record_every must be at least 1".to_string());
    }
    c.finish()?;
    let params = params.unwrap();
    let record_every = cfg
        .record_every
        .unwrap_or(((0.1 / params.dt).round() as u64).max(1));
    Ok(McRun {
        options: SimulationOptions {
            t_end: t_end.unwrap(),
            record_every,
            lorenz_every: cfg.lorenz_every,
            epsilon,
            engine: EngineOptions {
                pairing: pairing.unwrap_or_default(),
                tax_mode: tax_mode.unwrap_or_default(),
            },
        },
        params,
        initial,
        seed: seed.unwrap(),
        stream: cfg.stream.unwrap_or(0),
        out: out.unwrap(),
    })
}

pub fn resolve_fp(cfg: &RunConfig) -> Result<FpRun, Failure> {
    let mut c = Collector(Vec::new());
    let params = model_params(cfg, &mut c, Some(0.01));
    let t_end = c.need(&cfg.t_end, "t_end");
    let out = c.need(&cfg.out, "out");
    let c0 = cfg.c0.unwrap_or(0.01);
    if !(0.0..1.0).contains(&c0) {
        c.0.push(format!("c0 must lie in [0, 1) (got {c0})"));
    }
    let span = cfg.span_in_means.unwrap_or(MIN_SPAN_IN_MEANS);
    if !(span >= MIN_SPAN_IN_MEANS) {
        c.0.push(format!(
            "span_in_means must be at least {MIN_SPAN_IN_MEANS} (got {span})"
        ));
    }
    let bins = cfg.bins.unwrap_or(2048);
    if bins < 2 {
        c.0.push("bins must be at least 2".to_string());
    }
    let growth = cfg.growth.unwrap_or(64.0);
    if !(growth >= 1.0) {
        c.0.push(format!("growth must be >= 1 (got {growth})"));
    }
    let epsilon = cfg.epsilon.unwrap_or(0.01);
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        c.0.push(format!("epsilon must lie in (0, 1] (got {epsilon})"));
    }
    for (name, v) in [
        ("t_end", t_end),
        ("record_interval", cfg.record_interval),
        ("snapshot_every", cfg.snapshot_every),
        ("dt_max", cfg.dt_max),
    ] {
        if let Some(x) = v {
            if !(x > 0.0) {
                c.0.push(format!("{name} must be positive (got {x})"));
            }
        }
    }
    c.finish()?;
    let params = params.unwrap();
    let t_end = t_end.unwrap();
    Ok(FpRun {
        grid: GridSpec {
            bins,
            w_max: span * params.mean_wealth(),
            spacing: if growth == 1.0 {
                Spacing::Uniform
            } else {
                Spacing::Geometric { growth }
            },
        },
        params,
        c0,
        t_end,
        record_interval: cfg.record_interval.unwrap_or(t_end / 200.0),
        snapshot_every: cfg.snapshot_every,
        dt_max: cfg.dt_max,
        epsilon,
        out: out.unwrap(),
    })
}
