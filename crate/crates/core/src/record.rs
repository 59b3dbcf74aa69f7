//! Run records and their on-disk form: a JSON manifest plus CSV time series,
//! Lorenz snapshots and final states.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::LorenzCurve;
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Version of the manifest and CSV layouts written by this crate.
pub const SCHEMA_VERSION: &str = "1";

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Mc,
    Fp,
    Theory,
}

/// One sample of the observables.
///
/// For Monte Carlo runs the condensed wealth is taken to be the richest agent, so
/// `gini_p` is the Gini of everyone else. For Fokker-Planck runs `top1_share` is the
/// condensed fraction `c` and `gini_p` is the Gini of the classical density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub top1_share: f64,
    pub top_eps_share: f64,
    #[serde(rename = "gini_P")]
    pub gini_full: f64,
    #[serde(rename = "gini_p")]
    pub gini_classical: f64,
    pub wealth_residual: f64,
    /// Cumulative count since the start of the run.
    pub clipped_bias_count: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: u64,
    pub transactions: u64,
    pub clipped_bias: u64,
    pub clamped_wealth: u64,
    pub clip_fraction: f64,
    pub max_abs_wealth_residual: f64,
    /// Fokker-Planck only: worst relative agent-count drift.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_abs_agent_residual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub engine: EngineKind,
    pub params: ModelParams,
    pub seed: Option<u64>,
    pub stream_id: Option<u64>,
    pub series: Vec<SeriesRow>,
    pub lorenz: Vec<(f64, LorenzCurve)>,
    /// Monte Carlo: agent wealths at the end of the run.
    pub final_wealths: Option<Vec<f64>>,
    /// Fokker-Planck: `(t, w_center, density)` snapshots.
    pub grid_snapshots: Vec<(f64, Vec<(f64, f64)>)>,
    pub summary: RunSummary,
    pub flags: Vec<String>,
}

impl RunRecord {
    pub fn last(&self) -> Option<&SeriesRow> {
        self.series.last()
    }

    /// Mean top-agent share over the final `fraction` of the run time.
    pub fn tail_mean_top1(&self, fraction: f64) -> f64 {
        self.tail_mean(fraction, |r| r.top1_share)
    }

    pub fn tail_mean(&self, fraction: f64, f: impl Fn(&SeriesRow) -> f64) -> f64 {
        let Some(last) = self.series.last() else {
            return f64::NAN;
        };
        let t0 = last.t * (1.0 - fraction);
        let (sum, n) = self
            .series
            .iter()
            .filter(|r| r.t >= t0)
            .fold((0.0, 0usize), |(s, n), r| (s + f(r), n + 1));
        sum / n as f64
    }

    /// Writes `series.csv`, Lorenz and grid snapshots and `final_wealths.csv` into `dir`.
    /// Returns the relative paths written.
    pub fn write_data(&self, dir: &Path) -> Result<Vec<String>> {
        fs::create_dir_all(dir)?;
        let mut files = vec!["series.csv".to_string()];
        write_series_csv(&dir.join("series.csv"), &self.series)?;
        if !self.lorenz.is_empty() {
            fs::create_dir_all(dir.join("lorenz"))?;
            for (t, curve) in &self.lorenz {
                let name = format!("lorenz/lorenz_t{t}.csv");
                curve.write_csv(BufWriter::new(File::create(dir.join(&name))?))?;
                files.push(name);
            }
        }
        if !self.grid_snapshots.is_empty() {
            fs::create_dir_all(dir.join("grid"))?;
            for (t, rows) in &self.grid_snapshots {
                let name = format!("grid/grid_t{t}.csv");
                let mut wtr = csv::Writer::from_path(dir.join(&name))?;
                wtr.write_record(["w_center", "density"])?;
                for (w, p) in rows {
                    wtr.write_record([w.to_string(), p.to_string()])?;
                }
                wtr.flush()?;
                files.push(name);
            }
        }
        if let Some(w) = &self.final_wealths {
            let mut wtr = csv::Writer::from_path(dir.join("final_wealths.csv"))?;
            wtr.write_record(["wealth"])?;
            for x in w {
                wtr.write_record([x.to_string()])?;
            }
            wtr.flush()?;
            files.push("final_wealths.csv".to_string());
        }
        Ok(files)
    }

    /// Manifest describing this run; `config` is the caller's full configuration.
    pub fn manifest(&self, config: serde_json::Value, files: Vec<String>) -> Manifest {
        Manifest {
            schema_version: SCHEMA_VERSION.to_string(),
            kind: "run".to_string(),
            engine: Some(self.engine),
            code_version: CODE_VERSION.to_string(),
            config_hash: config_hash(&config),
            config,
            params: Some(self.params.clone()),
            seed: self.seed,
            stream_id: self.stream_id,
            wall_time_seconds: None,
            summary: Some(self.summary.clone()),
            flags: self.flags.clone(),
            files,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: String,
    /// `run`, `theory`, `sweep`, `sweep_job` or `analysis`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine: Option<EngineKind>,
    pub code_version: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ModelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<RunSummary>,
    #[serde(default)]
    pub flags: Vec<String>,
    #[serde(default)]
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(kind: &str, config: serde_json::Value) -> Self {
        Manifest {
            schema_version: SCHEMA_VERSION.to_string(),
            kind: kind.to_string(),
            engine: None,
            code_version: CODE_VERSION.to_string(),
            config_hash: config_hash(&config),
            config,
            params: None,
            seed: None,
            stream_id: None,
            wall_time_seconds: None,
            summary: None,
            flags: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    /// Reads a manifest and refuses any schema version other than [`SCHEMA_VERSION`].
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_str())
            .unwrap_or("<missing>")
            .to_string();
        if found != SCHEMA_VERSION {
            return Err(Error::Schema {
                found,
                expected: SCHEMA_VERSION.to_string(),
            });
        }
        Ok(serde_json::from_value(value)?)
    }
}

/// Sidecar manifest path for a standalone output file: `out.csv` -> `out.manifest.json`.
pub fn sidecar_manifest_path(file: &Path) -> PathBuf {
    let stem = file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    file.with_file_name(format!("{stem}.manifest.json"))
}

/// SHA-256 of the compact JSON form of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let bytes = serde_json::to_vec(config).unwrap_or_default();
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn write_series_csv(path: &Path, rows: &[SeriesRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_series_csv(path: &Path) -> Result<Vec<SeriesRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, top: f64) -> SeriesRow {
        SeriesRow {
            t,
            top1_share: top,
            top_eps_share: top,
            gini_full: 0.5,
            gini_classical: 0.25,
            wealth_residual: 1e-17,
            clipped_bias_count: 3,
        }
    }

    #[test]
    fn series_csv_header_and_values_survive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let rows = vec![row(0.0, 0.1), row(0.1, 1.0 / 3.0)];
        write_series_csv(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "t,top1_share,top_eps_share,gini_P,gini_p,wealth_residual,clipped_bias_count\n"
        ));
        assert_eq!(read_series_csv(&path).unwrap(), rows);
    }

    #[test]
    fn malformed_series_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(
            &path,
            "t,top1_share,top_eps_share,gini_P,gini_p,wealth_residual,clipped_bias_count\n0,0.1,0.1,0.2,0.1,0,0\n0.1,abc,0.1,0.2,0.1,0,0\n",
        )
        .unwrap();
        let err = read_series_csv(&path).unwrap_err().to_string();
        assert!(err.contains("line: 3") || err.contains("line 3"), "{err}");
    }

    #[test]
    fn manifest_schema_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = Manifest::new("theory", serde_json::json!({"zeta": 0.2}));
        m.write(&path).unwrap();
        assert_eq!(Manifest::read(&path).unwrap(), m);
        fs::write(&path, r#"{"schema_version":"0"}"#).unwrap();
        assert!(matches!(Manifest::read(&path), Err(Error::Schema { .. })));
    }

    #[test]
    fn config_hash_is_stable() {
        let a = config_hash(&serde_json::json!({"a": 1, "b": [1, 2]}));
        let b = config_hash(&serde_json::json!({"a": 1, "b": [1, 2]}));
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn sidecar_path() {
        assert_eq!(
            sidecar_manifest_path(Path::new("/tmp/out.csv")),
            PathBuf::from("/tmp/out.manifest.json")
        );
    }

    #[test]
    fn tail_mean_uses_final_fraction() {
        let rec = RunRecord {
            engine: EngineKind::Mc,
            params: ModelParams::constant(0.3, 0.1, 10, 10.0),
            seed: None,
            stream_id: None,
            series: (0..=10).map(|i| row(i as f64, i as f64)).collect(),
            lorenz: vec![],
            final_wealths: None,
            grid_snapshots: vec![],
            summary: RunSummary::default(),
            flags: vec![],
        };
        // t >= 8: rows 8, 9, 10
        assert_eq!(rec.tail_mean_top1(0.2), 9.0);
    }
}
