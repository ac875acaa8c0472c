use std::fs;
use std::path::{Path, PathBuf};

use quantlab_core::{LabError, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::experiments::{reverify, ExperimentKind, RunOutput, Verdict};

pub const CONFIG_FILE: &str = "config.toml";
pub const ROWS_FILE: &str = "rows.csv";
pub const REPORT_FILE: &str = "report.json";
pub const PLOT_FILE: &str = "plot.svg";

/// Contents of `report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredReport {
    pub experiment: ExperimentKind,
    pub created: String,
    pub passed: bool,
    pub verdicts: Vec<Verdict>,
    pub summary: serde_json::Value,
    pub config: ExperimentConfig,
    pub rows: String,
}

/// Writes `<out_dir>/<experiment>/<timestamp>/` and returns that directory.
pub fn write_run(out: &RunOutput, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let now = chrono::Utc::now();
    let stamp = now.format("%Y%m%dT%H%M%S%.3fZ").to_string();
    let parent = cfg.out_dir.join(out.kind.name());
    fs::create_dir_all(&parent)?;
    let mut dir = parent.join(&stamp);
    let mut k = 1;
    while dir.exists() {
        dir = parent.join(format!("{stamp}-{k}"));
        k += 1;
    }
    fs::create_dir(&dir)?;

    let mut cfg = cfg.clone();
    cfg.experiment = Some(out.kind);
    fs::write(dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    fs::write(dir.join(ROWS_FILE), &out.rows_csv)?;
    let report = StoredReport {
        experiment: out.kind,
        created: now.to_rfc3339(),
        passed: out.passed(),
        verdicts: out.verdicts.clone(),
        summary: out.summary.clone(),
        config: cfg,
        rows: ROWS_FILE.to_string(),
    };
    fs::write(
        dir.join(REPORT_FILE),
        serde_json::to_string_pretty(&report)?,
    )?;
    Ok(dir)
}

pub fn read_report(path: &Path) -> Result<StoredReport> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Stored verdicts next to the ones recomputed from the stored rows.
#[derive(Debug, Clone)]
pub struct Verification {
    pub report: StoredReport,
    pub recomputed: Vec<Verdict>,
}

impl Verification {
    pub fn consistent(&self) -> bool {
        self.report.verdicts == self.recomputed
            && self.report.passed == self.recomputed.iter().all(|v| v.passed)
    }

    pub fn passed(&self) -> bool {
        self.consistent() && self.recomputed.iter().all(|v| v.passed)
    }
}

/// Re-judges the run described by a `report.json`.
pub fn verify_report(path: &Path) -> Result<Verification> {
    let report = read_report(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let rows_path = dir.join(&report.rows);
    let rows = fs::read_to_string(&rows_path)
        .map_err(|e| LabError::Config(format!("{}: {e}", rows_path.display())))?;
    let recomputed = reverify(report.experiment, &report.config, &rows)?;
    Ok(Verification { report, recomputed })
}
