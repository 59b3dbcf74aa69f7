//! Recomputes Gini decompositions, Lorenz curves and logistic fits from stored outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::Serialize;
use ysm_core::analytics::{full_gini, lorenz_curve};
use ysm_core::record::{read_series_csv, sidecar_manifest_path, Manifest};
use ysm_core::sweep::{fit_logistic, LogisticFit};
use ysm_core::theory::c_infinity;
use ysm_core::WealthDistribution;

#[derive(Debug, Serialize)]
pub struct Analysis {
    pub input: PathBuf,
    pub fit: Option<LogisticFit>,
    pub c_theory: Option<f64>,
    pub files: Vec<String>,
}

/// Analyzes a run directory (with `manifest.json` and `series.csv`) or a `(t, c)`
/// trajectory CSV with its sidecar manifest, writing results into `out`.
pub fn analyze(input: &Path, out: &Path) -> anyhow::Result<Analysis> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    if input.is_dir() {
        analyze_run(input, out)
    } else {
        analyze_trajectory(input, out)
    }
}

fn theory_for(manifest: &Manifest) -> Option<f64> {
    let p = manifest.params.as_ref()?;
    c_infinity(p.zeta, p.tau_infinity).ok()
}

fn analyze_run(dir: &Path, out: &Path) -> anyhow::Result<Analysis> {
    let manifest_path = dir.join("manifest.json");
    let manifest = Manifest::read(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))?;
    let series_path = dir.join("series.csv");
    let series = read_series_csv(&series_path)
        .with_context(|| format!("malformed {}", series_path.display()))?;
    if series.is_empty() {
        bail!("{} has no rows", series_path.display());
    }
    let mut files = Vec::new();

    let mut wtr = csv::Writer::from_path(out.join("gini_decomposition.csv"))?;
    wtr.write_record(["t", "c", "gini_p", "gini_P", "gini_P_decomposed"])?;
    for r in &series {
        let decomposed = full_gini(r.top1_share, r.gini_classical.clamp(0.0, 1.0))
            .map_err(|e| anyhow!("row t = {}: {e}", r.t))?;
        wtr.write_record([
            r.t.to_string(),
            r.top1_share.to_string(),
            r.gini_classical.to_string(),
            r.gini_full.to_string(),
            decomposed.to_string(),
        ])?;
    }
    wtr.flush()?;
    files.push("gini_decomposition.csv".to_string());

    let wealths_path = dir.join("final_wealths.csv");
    if wealths_path.exists() {
        let wealths = read_column(&wealths_path, "wealth")?;
        let dist = WealthDistribution::from_samples(wealths)
            .map_err(|e| anyhow!("{}: {e}", wealths_path.display()))?;
        let curve = lorenz_curve(&dist)?;
        curve.write_csv(fs::File::create(out.join("lorenz.csv"))?)?;
        files.push("lorenz.csv".to_string());
    }

    let (ts, cs): (Vec<f64>, Vec<f64>) = series.iter().map(|r| (r.t, r.top1_share)).unzip();
    finish(dir, out, &manifest, &ts, &cs, files)
}

fn analyze_trajectory(path: &Path, out: &Path) -> anyhow::Result<Analysis> {
    let sidecar = sidecar_manifest_path(path);
    let manifest =
        Manifest::read(&sidecar).with_context(|| format!("reading {}", sidecar.display()))?;
    let ts = read_column(path, "t")?;
    let cs = read_column(path, "c")?;
    finish(path, out, &manifest, &ts, &cs, Vec::new())
}

fn finish(
    input: &Path,
    out: &Path,
    manifest: &Manifest,
    ts: &[f64],
    cs: &[f64],
    mut files: Vec<String>,
) -> anyhow::Result<Analysis> {
    let c_theory = theory_for(manifest);
    let fit = match fit_logistic(ts, cs) {
        Ok(fit) => {
            let mut wtr = csv::Writer::from_path(out.join("logistic_fit.csv"))?;
            wtr.write_record([
                "c_inf_hat",
                "rate_hat",
                "c0_hat",
                "rms_residual",
                "degenerate",
                "c_theory",
                "abs_error",
            ])?;
            let theory = c_theory.unwrap_or(f64::NAN);
            wtr.write_record([
                fit.c_inf_hat.to_string(),
                fit.rate_hat.to_string(),
                fit.c0_hat.to_string(),
                fit.rms_residual.to_string(),
                fit.degenerate.to_string(),
                theory.to_string(),
                (fit.c_inf_hat - theory).abs().to_string(),
            ])?;
            wtr.flush()?;
            files.push("logistic_fit.csv".to_string());
            Some(fit)
        }
        Err(e) => {
            eprintln!("warning: no logistic fit: {e}");
            None
        }
    };
    let config = serde_json::json!({
        "input": input,
        "source_config_hash": manifest.config_hash,
    });
    let mut m = Manifest::new("analysis", config);
    m.params = manifest.params.clone();
    m.files = files.clone();
    m.write(&out.join("manifest.json"))?;
    Ok(Analysis {
        input: input.to_path_buf(),
        fit,
        c_theory,
        files,
    })
}

/// Reads one numeric column by header name, reporting the line of any bad value.
fn read_column(path: &Path, name: &str) -> anyhow::Result<Vec<f64>> {
    let mut rdr =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let idx = headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| anyhow!("{}: no `{name}` column", path.display()))?;
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.with_context(|| format!("malformed {}", path.display()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = rec
            .get(idx)
            .ok_or_else(|| anyhow!("{} line {line}: missing `{name}`", path.display()))?;
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| anyhow!("{} line {line}: `{field}` is not a number", path.display()))?;
        values.push(v);
    }
    Ok(values)
}
