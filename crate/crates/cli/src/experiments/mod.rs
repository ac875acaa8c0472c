//! The five canonical studies. Each one produces a table of rows and a list
//! of verdicts that depend on nothing but the config and those rows, so a
//! stored run can be re-judged later.

mod example_gap;
mod heat;
mod mfc;
mod rates;
mod simultaneous;

use std::fmt;
use std::str::FromStr;

use quantlab_core::{LabError, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{config_err, ExperimentConfig};

pub use example_gap::{run_example_gap, GapParams, GapRow, GapSweep, Reference};
pub use heat::{run_heat_projection, HeatParams, HeatRow};
pub use mfc::{run_mfc_convergence, MfcParams, MfcRow};
pub use rates::{run_quantization_rates, RateSweep, RatesParams, RatesRow};
pub use simultaneous::{run_simultaneous_tradeoff, SimultaneousParams, SimultaneousRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    QuantizationRates,
    SimultaneousTradeoff,
    ExampleGap,
    MfcConvergence,
    HeatProjection,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        Self::QuantizationRates,
        Self::SimultaneousTradeoff,
        Self::ExampleGap,
        Self::MfcConvergence,
        Self::HeatProjection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::QuantizationRates => "quantization-rates",
            Self::SimultaneousTradeoff => "simultaneous-tradeoff",
            Self::ExampleGap => "example-gap",
            Self::MfcConvergence => "mfc-convergence",
            Self::HeatProjection => "heat-projection",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown experiment `{s}`")))
    }
}

/// One pass/fail judgement against a configured threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report<R> {
    pub rows: Vec<R>,
    pub verdicts: Vec<Verdict>,
    pub summary: serde_json::Value,
}

impl<R> Report<R> {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

/// Type-erased result of a run, ready to be written to disk.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub kind: ExperimentKind,
    pub rows_csv: String,
    pub verdicts: Vec<Verdict>,
    pub summary: serde_json::Value,
}

impl RunOutput {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }
}

pub(crate) trait Study {
    type Params: DeserializeOwned;
    type Row: Serialize + DeserializeOwned;

    fn validate(cfg: &ExperimentConfig, p: &Self::Params) -> Result<()>;
    fn rows(cfg: &ExperimentConfig, p: &Self::Params) -> Result<Vec<Self::Row>>;
    fn judge(
        cfg: &ExperimentConfig,
        p: &Self::Params,
        rows: &[Self::Row],
    ) -> Result<(Vec<Verdict>, serde_json::Value)>;
}

fn prepare<S: Study>(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<S::Params> {
    cfg.validate_common(kind)?;
    let p = cfg.params::<S::Params>()?;
    S::validate(cfg, &p)?;
    Ok(p)
}

pub(crate) fn run_study<S: Study>(
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
) -> Result<Report<S::Row>> {
    let p = prepare::<S>(kind, cfg)?;
    let rows = S::rows(cfg, &p)?;
    let (verdicts, summary) = S::judge(cfg, &p, &rows)?;
    Ok(Report {
        rows,
        verdicts,
        summary,
    })
}

pub fn rows_to_csv<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| LabError::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| LabError::Numeric(e.to_string()))
}

pub fn rows_from_csv<R: DeserializeOwned>(text: &str) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(LabError::from))
        .collect()
}

fn erase<S: Study>(kind: ExperimentKind, report: Report<S::Row>) -> Result<RunOutput> {
    Ok(RunOutput {
        kind,
        rows_csv: rows_to_csv(&report.rows)?,
        verdicts: report.verdicts,
        summary: report.summary,
    })
}

fn rejudge<S: Study>(
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
    rows_csv: &str,
) -> Result<Vec<Verdict>> {
    let p = prepare::<S>(kind, cfg)?;
    let rows: Vec<S::Row> = rows_from_csv(rows_csv)?;
    Ok(S::judge(cfg, &p, &rows)?.0)
}

macro_rules! dispatch {
    ($kind:expr, $f:ident ( $($arg:expr),* )) => {
        match $kind {
            ExperimentKind::QuantizationRates => $f::<rates::Rates>($kind, $($arg),*),
            ExperimentKind::SimultaneousTradeoff => $f::<simultaneous::Simultaneous>($kind, $($arg),*),
            ExperimentKind::ExampleGap => $f::<example_gap::ExampleGap>($kind, $($arg),*),
            ExperimentKind::MfcConvergence => $f::<mfc::Mfc>($kind, $($arg),*),
            ExperimentKind::HeatProjection => $f::<heat::Heat>($kind, $($arg),*),
        }
    };
}

fn run_erased<S: Study>(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<RunOutput> {
    erase::<S>(kind, run_study::<S>(kind, cfg)?)
}

fn validate_only<S: Study>(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<()> {
    prepare::<S>(kind, cfg).map(|_| ())
}

/// Checks the config without running anything.
pub fn validate(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<()> {
    dispatch!(kind, validate_only(cfg))
}

pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<RunOutput> {
    dispatch!(kind, run_erased(cfg))
}

/// Recomputes the verdicts of a stored run from its config and rows.
pub fn reverify(
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
    rows_csv: &str,
) -> Result<Vec<Verdict>> {
    dispatch!(kind, rejudge(cfg, rows_csv))
}

/// Mean of `value` over rows sharing the same key, keys in first-seen order.
pub(crate) fn grouped_means<K: PartialEq + Copy>(
    items: impl IntoIterator<Item = (K, f64)>,
) -> Vec<(K, f64)> {
    let mut acc: Vec<(K, f64, usize)> = Vec::new();
    for (k, v) in items {
        match acc.iter_mut().find(|(key, ..)| *key == k) {
            Some(e) => {
                e.1 += v;
                e.2 += 1;
            }
            None => acc.push((k, v, 1)),
        }
    }
    acc.into_iter().map(|(k, s, c)| (k, s / c as f64)).collect()
}

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        config_err(msg())
    }
}

/// Sweep values must be nonempty, positive and divide the atom count.
pub(crate) fn check_sweep(label: &str, ns: &[usize], atoms: usize) -> Result<()> {
    require(!ns.is_empty(), || format!("{label}: empty N sweep"))?;
    for &n in ns {
        require(n > 0 && atoms.is_multiple_of(n), || {
            format!("{label}: atom count {atoms} is not divisible by N = {n}")
        })?;
    }
    Ok(())
}
