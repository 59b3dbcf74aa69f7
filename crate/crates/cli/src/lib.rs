//! `ysm`: simulate, solve, predict, sweep and analyze wealth condensation.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyze;
pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use ysm_core::fokker_planck::{fp_run, FpOptions, WealthGrid};
use ysm_core::mc::simulate;
use ysm_core::record::{sidecar_manifest_path, Manifest, RunRecord};
use ysm_core::sweep::{run_sweep, sweep_manifest, SweepPlan};
use ysm_core::theory::{
    c_infinity, closed_form_trajectory, logistic_integrate, stability, write_trajectory_csv,
    LogisticParams,
};
use ysm_core::{Error, RngStream};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "ysm", version, about = "Yard-sale wealth condensation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Agent-based Monte Carlo run.
    Simulate {
        /// JSON run configuration; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        flags: RunConfig,
    },
    /// Fokker-Planck solve with the condensed wealth tracked separately.
    FpSolve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        flags: RunConfig,
    },
    /// Steady state, stability and optional trajectory of the logistic law.
    Theory {
        #[arg(long)]
        zeta: f64,
        #[arg(long)]
        tau_inf: f64,
        /// Initial condensed fraction for the trajectory.
        #[arg(long, default_value_t = 0.01)]
        c0: f64,
        #[arg(long, default_value_t = 200.0)]
        t_end: f64,
        /// Number of intervals in the trajectory.
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long, value_enum, default_value_t = Method::Closed)]
        method: Method,
        /// Write the trajectory here as `t,c` CSV.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Runs every job of a sweep plan.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        /// Overrides the plan's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Gini decomposition, Lorenz curve and logistic fit of a stored run or trajectory.
    Analyze {
        /// Run directory or trajectory CSV.
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Closed,
    Numerical,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParams(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.into()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Parses `args` (program name first), runs the command on the process streams and
/// returns its exit code.
pub fn run_from<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout(), &mut std::io::stderr())
}

/// As [`run_from`], writing reports to `out` and diagnostics to `err`.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code() as u8;
            let _ = if code == 0 {
                write!(out, "{e}")
            } else {
                write!(err, "{e}")
            };
            return code;
        }
    };
    let mut io = Io { out, err };
    let result = run(cli.command, &mut io);
    match result {
        Ok(()) => 0,
        Err(Failure::Config(msg)) => {
            let _ = writeln!(io.err, "configuration error:\n{msg}");
            2
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(io.err, "error: {e:#}");
            1
        }
    }
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

fn run(command: Command, io: &mut Io) -> Result<(), Failure> {
    match command {
        Command::Simulate { config, flags } => cmd_simulate(config, &flags, io),
        Command::FpSolve { config, flags } => cmd_fp_solve(config, &flags, io),
        Command::Theory {
            zeta,
            tau_inf,
            c0,
            t_end,
            points,
            method,
            trajectory,
        } => cmd_theory(zeta, tau_inf, c0, t_end, points, method, trajectory, io),
        Command::Sweep { plan, out, workers } => cmd_sweep(plan, out, workers, io),
        Command::Analyze { input, out } => {
            let a = analyze::analyze(&input, &out)?;
            if let Some(fit) = a.fit {
                writeln!(io.out, "c_hat {}", fit.c_inf_hat)?;
                writeln!(io.out, "rate_hat {}", fit.rate_hat)?;
                writeln!(io.out, "rms_residual {}", fit.rms_residual)?;
                if let Some(th) = a.c_theory {
                    writeln!(io.out, "c_theory {th}")?;
                    writeln!(io.out, "abs_error {}", (fit.c_inf_hat - th).abs())?;
                }
            }
            writeln!(io.out, "wrote {} files to {}", a.files.len(), out.display())?;
            Ok(())
        }
    }
}

fn write_run(
    record: &RunRecord,
    out: &std::path::Path,
    config: serde_json::Value,
    started: Instant,
    io: &mut Io,
) -> Result<(), Failure> {
    let files = record.write_data(out)?;
    let mut manifest = record.manifest(config, files);
    manifest.wall_time_seconds = Some(started.elapsed().as_secs_f64());
    manifest.write(&out.join("manifest.json"))?;
    if let Some(last) = record.last() {
        writeln!(io.out, "t {}", last.t)?;
        writeln!(io.out, "top1_share {}", last.top1_share)?;
        writeln!(io.out, "tail_mean_top1 {}", record.tail_mean_top1(0.2))?;
        writeln!(io.out, "gini_P {}", last.gini_full)?;
    }
    for flag in &record.flags {
        writeln!(io.err, "flag: {flag}")?;
    }
    Ok(())
}

fn cmd_simulate(config: Option<PathBuf>, flags: &RunConfig, io: &mut Io) -> Result<(), Failure> {
    let cfg = RunConfig::load(config.as_deref(), flags)?;
    let run = config::resolve_mc(&cfg)?;
    let started = Instant::now();
    let init = run.initial.build(
        run.params.n_agents,
        run.params.total_wealth,
        run.seed,
        run.stream,
    )?;
    let record = simulate(
        &run.params,
        init,
        RngStream::new(run.seed, run.stream),
        &run.options,
        &mut [],
    )?;
    let value = serde_json::to_value(&run).map_err(|e| Failure::Runtime(e.into()))?;
    write_run(&record, &run.out, value, started, io)
}

fn cmd_fp_solve(config: Option<PathBuf>, flags: &RunConfig, io: &mut Io) -> Result<(), Failure> {
    let cfg = RunConfig::load(config.as_deref(), flags)?;
    let run = config::resolve_fp(&cfg)?;
    let started = Instant::now();
    let grid = WealthGrid::exponential(
        &run.grid,
        run.params.n_agents as f64,
        run.params.total_wealth,
        run.c0,
    )?;
    let opts = FpOptions {
        t_end: run.t_end,
        record_every: run.record_interval,
        snapshot_every: run.snapshot_every,
        dt_max: run.dt_max,
        epsilon: run.epsilon,
    };
    let record = fp_run(&grid, &run.params, &opts)?;
    let value = serde_json::to_value(&run).map_err(|e| Failure::Runtime(e.into()))?;
    write_run(&record, &run.out, value, started, io)
}

fn cmd_theory(
    zeta: f64,
    tau_inf: f64,
    c0: f64,
    t_end: f64,
    points: usize,
    method: Method,
    trajectory: Option<PathBuf>,
    io: &mut Io,
) -> Result<(), Failure> {
    let c_inf = c_infinity(zeta, tau_inf).map_err(|e| Failure::Config(e.to_string()))?;
    let report = stability(zeta, tau_inf);
    writeln!(io.out, "c_infinity {c_inf}")?;
    writeln!(io.out, "critical {}", report.critical)?;
    if report.critical {
        writeln!(
            io.out,
            "critical point: zeta equals tau_inf, the fixed points merge at c = 0"
        )?;
    }
    for p in &report.fixed_points {
        writeln!(
            io.out,
            "fixed_point c={} eigenvalue={} stable={}",
            p.c, p.eigenvalue, p.stable
        )?;
    }
    writeln!(io.out, "stable_point {}", report.stable_point)?;

    let Some(path) = trajectory else {
        return Ok(());
    };
    let params = LogisticParams::new(zeta, tau_inf, c0)?;
    if !(t_end > 0.0) || points == 0 {
        return Err(Failure::Config(
            "trajectory needs t_end > 0 and points >= 1".into(),
        ));
    }
    let (ts, cs) = match method {
        Method::Closed => closed_form_trajectory(&params, t_end, points)?,
        Method::Numerical => {
            let ts: Vec<f64> = (0..=points)
                .map(|i| t_end * i as f64 / points as f64)
                .collect();
            let cs = logistic_integrate(&params, &ts)?;
            (ts, cs)
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_trajectory_csv(&ts, &cs, BufWriter::new(File::create(&path)?))?;
    let config = serde_json::json!({
        "zeta": zeta,
        "tau_inf": tau_inf,
        "c0": c0,
        "t_end": t_end,
        "points": points,
        "method": match method { Method::Closed => "closed", Method::Numerical => "numerical" },
    });
    let mut manifest = Manifest::new("theory_trajectory", config);
    manifest.engine = Some(ysm_core::record::EngineKind::Theory);
    manifest.params = Some(ysm_core::ModelParams {
        tau_infinity: tau_inf,
        ..ysm_core::ModelParams::constant(zeta, tau_inf, 1, 1.0)
    });
    manifest.files = vec![path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()];
    manifest.write(&sidecar_manifest_path(&path))?;
    writeln!(io.out, "wrote {}", path.display())?;
    Ok(())
}

fn cmd_sweep(
    plan_path: PathBuf,
    out: Option<PathBuf>,
    workers: Option<usize>,
    io: &mut Io,
) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&plan_path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", plan_path.display())))?;
    let mut plan: SweepPlan = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", plan_path.display())))?;
    if let Some(o) = out {
        plan.output_dir = o;
    }
    if workers.is_some() {
        plan.workers = workers;
    }
    plan.validate()?;
    let started = Instant::now();
    let result = run_sweep(&plan)?;
    let mut manifest = sweep_manifest(&plan, &result);
    manifest.wall_time_seconds = Some(started.elapsed().as_secs_f64());
    manifest.write(&plan.output_dir.join("manifest.json"))?;
    writeln!(io.out, "zeta,tau,N,seeds,mean_top1,se_top1,c_theory")?;
    for c in &result.cells {
        writeln!(
            io.out,
            "{},{},{},{},{},{},{}",
            c.zeta, c.tau, c.n_agents, c.seeds, c.mean_top1, c.se_top1, c.c_theory
        )?;
    }
    let failed = result.failed_jobs();
    if failed > 0 {
        for j in result.jobs.iter().filter(|j| j.error.is_some()) {
            writeln!(
                io.err,
                "job {} failed: {}",
                j.directory,
                j.error.as_deref().unwrap_or("")
            )?;
        }
        return Err(Failure::Runtime(anyhow::anyhow!(
            "{failed} sweep jobs failed"
        )));
    }
    Ok(())
}
