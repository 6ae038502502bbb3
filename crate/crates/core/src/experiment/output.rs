//! Files written into a run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::integrator::StepStats;
use crate::observer::{ErrorRecord, GainCondition};

pub const ERRORS_FILE: &str = "errors.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const PE_SIGNAL_FILE: &str = "pe_signal.csv";
pub const PE_SCAN_FILE: &str = "pe_scan.csv";

const TIMESERIES_HEADER: &str = "t,e_z1,e_z2,e_W21,e_W22,lyapunov";

/// File name of a kernel estimate snapshot, e.g. `what22_t250.csv`.
pub fn snapshot_file(kernel: &str, t: f64) -> String {
    format!("what{kernel}_t{t}.csv")
}

pub fn true_kernel_file(kernel: &str) -> String {
    format!("w{kernel}_true.csv")
}

/// Writes error records as CSV with 17 significant digits.
pub fn write_timeseries(records: &[ErrorRecord], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(TIMESERIES_HEADER.len() + 1 + records.len() * 144);
    out.push_str(TIMESERIES_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.t, r.e_z1, r.e_z2, r.e_w21, r.e_w22, r.lyapunov
        )
        .unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_timeseries(path: &Path) -> Result<Vec<ErrorRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
    let header = reader.headers().map_err(|e| Error::parse(path, e))?;
    let found: Vec<&str> = header.iter().collect();
    if found.join(",") != TIMESERIES_HEADER {
        return Err(Error::parse(
            path,
            format!(
                "expected header {TIMESERIES_HEADER:?}, found {:?}",
                found.join(",")
            ),
        ));
    }
    let mut records = Vec::new();
    for (k, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::parse(path, e))?;
        let v = row
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, format!("row {}: {e}", k + 2)))?;
        if v.len() != 6 {
            return Err(Error::parse(
                path,
                format!("row {} has {} fields, expected 6", k + 2, v.len()),
            ));
        }
        records.push(ErrorRecord {
            t: v[0],
            e_z1: v[1],
            e_z2: v[2],
            e_w21: v[3],
            e_w22: v[4],
            lyapunov: v[5],
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

/// Hypothesis checks evaluated before integration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub w11_opnorm: f64,
    /// `l1 * ||W11||_op`; strong dissipativity needs this below one.
    pub dissipativity_product: f64,
    pub dissipativity_holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub b1_opnorm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gain_lhs: Option<f64>,
    pub gain_rhs: f64,
    pub gain_condition_holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu2: Option<f64>,
}

impl From<&GainCondition> for Diagnostics {
    fn from(g: &GainCondition) -> Self {
        Self {
            w11_opnorm: g.w11_opnorm,
            dissipativity_product: g.dissipativity_product,
            dissipativity_holds: g.alpha.is_some(),
            alpha: g.alpha,
            b1_opnorm: g.b1_opnorm,
            gain_lhs: g.lhs,
            gain_rhs: g.rhs,
            gain_condition_holds: g.holds,
            epsilon: g.epsilon,
            mu1: g.mu1,
            mu2: g.mu2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounts {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

impl From<StepStats> for StepCounts {
    fn from(s: StepStats) -> Self {
        Self {
            accepted: s.accepted,
            rejected: s.rejected,
            rhs_evals: s.rhs_evals,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalErrors {
    pub t: f64,
    pub e_z1: f64,
    pub e_z2: f64,
    pub e_w21: f64,
    pub e_w22: f64,
    pub lyapunov: f64,
}

impl From<&ErrorRecord> for FinalErrors {
    fn from(r: &ErrorRecord) -> Self {
        Self {
            t: r.t,
            e_z1: r.e_z1,
            e_z2: r.e_z2,
            e_w21: r.e_w21,
            e_w22: r.e_w22,
            lyapunov: r.lyapunov,
        }
    }
}

impl From<&FinalErrors> for ErrorRecord {
    fn from(r: &FinalErrors) -> Self {
        Self {
            t: r.t,
            e_z1: r.e_z1,
            e_z2: r.e_z2,
            e_w21: r.e_w21,
            e_w22: r.e_w22,
            lyapunov: r.lyapunov,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeSummary {
    /// Number of scanned windows; zero when the stored horizon is shorter
    /// than one window.
    pub windows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_margin: Option<f64>,
    /// Weight operator used for the scan.
    pub weight: String,
}

/// Everything known about a run, written as `manifest.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Output files relative to the run directory.
    pub files: Vec<String>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<StepCounts>,
    #[serde(skip_serializing_if = "Option::is_none", rename = "final")]
    pub final_errors: Option<FinalErrors>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pe: Option<PeSummary>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).map_err(|e| Error::parse(&path, e))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| Error::parse(&path, e))
    }
}
