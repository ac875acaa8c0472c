use quantlab_core::{
    e_n_estimate, rate_fit, reference_rate, QuantizeOptions, Result, SampledMeasure,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    check_sweep, grouped_means, require, run_study, ExperimentKind, Report, Study, Verdict,
};
use crate::config::ExperimentConfig;

/// Quantization of the midpoint grid with `per_side^dim` atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSweep {
    pub dim: usize,
    pub per_side: usize,
    pub ns: Vec<usize>,
    pub slope_min: f64,
    pub slope_max: f64,
    #[serde(default = "default_r2")]
    pub min_r2: f64,
}

fn default_r2() -> f64 {
    0.95
}

impl RateSweep {
    pub fn atoms(&self) -> usize {
        self.per_side.pow(self.dim as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesParams {
    pub sweeps: Vec<RateSweep>,
}

fn doubling(from: usize, to: usize) -> Vec<usize> {
    std::iter::successors(Some(from), |n| Some(n * 2))
        .take_while(|&n| n <= to)
        .collect()
}

impl Default for RatesParams {
    fn default() -> Self {
        Self {
            sweeps: vec![
                RateSweep {
                    dim: 1,
                    per_side: 4096,
                    ns: doubling(2, 256),
                    slope_min: -1.1,
                    slope_max: -0.9,
                    min_r2: 0.95,
                },
                RateSweep {
                    dim: 2,
                    per_side: 64,
                    ns: doubling(4, 256),
                    slope_min: -0.6,
                    slope_max: -0.4,
                    min_r2: 0.95,
                },
                RateSweep {
                    dim: 3,
                    per_side: 16,
                    ns: doubling(8, 512),
                    slope_min: -0.45,
                    slope_max: -0.25,
                    min_r2: 0.95,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesRow {
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub atoms: usize,
    pub error: f64,
    pub reference_rate: f64,
}

pub(crate) struct Rates;

impl Study for Rates {
    type Params = RatesParams;
    type Row = RatesRow;

    fn validate(_: &ExperimentConfig, p: &RatesParams) -> Result<()> {
        require(!p.sweeps.is_empty(), || "no sweeps configured".into())?;
        for (i, s) in p.sweeps.iter().enumerate() {
            require(s.dim > 0 && s.per_side > 0, || {
                format!("sweep {i}: dim and per_side must be positive")
            })?;
            require(p.sweeps[..i].iter().all(|o| o.dim != s.dim), || {
                format!("sweep {i}: dimension {} appears twice", s.dim)
            })?;
            check_sweep(&format!("sweep {i}"), &s.ns, s.atoms())?;
            let mut distinct = s.ns.clone();
            distinct.sort_unstable();
            distinct.dedup();
            require(distinct.len() >= 2, || {
                format!("sweep {i}: need two distinct N to fit a slope")
            })?;
            require(s.slope_min < s.slope_max, || {
                format!("sweep {i}: empty slope range")
            })?;
        }
        Ok(())
    }

    fn rows(cfg: &ExperimentConfig, p: &RatesParams) -> Result<Vec<RatesRow>> {
        let mut rows = Vec::new();
        for s in &p.sweeps {
            let grid = SampledMeasure::cube_grid(s.dim, s.per_side)?;
            let tasks: Vec<(usize, u64)> =
                s.ns.iter()
                    .flat_map(|&n| cfg.seeds.iter().map(move |&seed| (n, seed)))
                    .collect();
            let part: Result<Vec<RatesRow>> = tasks
                .par_iter()
                .map(|&(n, seed)| {
                    let opts = QuantizeOptions::default()
                        .with_restarts(cfg.restarts)
                        .with_seed(seed);
                    Ok(RatesRow {
                        dim: s.dim,
                        n,
                        seed,
                        atoms: s.atoms(),
                        error: e_n_estimate(grid.samples(), n, None, &opts)?,
                        reference_rate: reference_rate(n, s.dim),
                    })
                })
                .collect();
            rows.extend(part?);
        }
        Ok(rows)
    }

    fn judge(
        cfg: &ExperimentConfig,
        p: &RatesParams,
        rows: &[RatesRow],
    ) -> Result<(Vec<Verdict>, serde_json::Value)> {
        let mut verdicts = Vec::new();
        let mut fits = serde_json::Map::new();
        for s in &p.sweeps {
            let mine: Vec<&RatesRow> = rows.iter().filter(|r| r.dim == s.dim).collect();
            let name = format!("d{} slope", s.dim);
            let expected = s.ns.len() * cfg.seeds.len();
            if mine.len() != expected {
                verdicts.push(Verdict::new(
                    name,
                    false,
                    format!("{} rows, expected {expected}", mine.len()),
                ));
                continue;
            }
            let means = grouped_means(mine.iter().map(|r| (r.n, r.error)));
            let pts: Vec<(f64, f64)> = means.iter().map(|&(n, e)| (n as f64, e)).collect();
            match rate_fit(&pts) {
                Ok(fit) => {
                    let ok = fit.slope >= s.slope_min
                        && fit.slope <= s.slope_max
                        && fit.r_squared >= s.min_r2;
                    verdicts.push(Verdict::new(
                        name,
                        ok,
                        format!(
                            "slope {:.4} in [{}, {}], R^2 {:.4} >= {}",
                            fit.slope, s.slope_min, s.slope_max, fit.r_squared, s.min_r2
                        ),
                    ));
                    fits.insert(
                        s.dim.to_string(),
                        json!({"slope": fit.slope, "constant": fit.constant, "r_squared": fit.r_squared}),
                    );
                }
                Err(e) => verdicts.push(Verdict::new(name, false, e.to_string())),
            }
        }
        Ok((verdicts, json!({ "fits": fits })))
    }
}

/// Sweeps of the constrained quantization error of uniform grids with
/// log-log slope fits per dimension.
pub fn run_quantization_rates(cfg: &ExperimentConfig) -> Result<Report<RatesRow>> {
    run_study::<Rates>(ExperimentKind::QuantizationRates, cfg)
}
