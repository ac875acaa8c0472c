use quantlab_core::hjb::{heat_value, heat_value_particles, PointCost, TerminalConfig};
use quantlab_core::rng::{derive_seed, stream};
use quantlab_core::{EmpiricalMeasure, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{require, run_study, ExperimentKind, Report, Study, Verdict};
use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatParams {
    pub trials: usize,
    pub max_particles: usize,
    pub max_dim: usize,
    /// Particles are drawn uniformly from `[-spread, spread]^d`.
    pub spread: f64,
    pub horizon: f64,
    pub kappa_max: f64,
    /// Every `zero_kappa_every`-th trial uses kappa = 0; 0 disables this.
    pub zero_kappa_every: usize,
    pub mc_samples: usize,
    pub terminal: TerminalConfig,
    pub tol: f64,
}

impl Default for HeatParams {
    fn default() -> Self {
        Self {
            trials: 1000,
            max_particles: 8,
            max_dim: 3,
            spread: 2.0,
            horizon: 1.0,
            kappa_max: 2.0,
            zero_kappa_every: 10,
            mc_samples: 64,
            terminal: TerminalConfig::MeanOfG {
                g: PointCost::Bump {
                    amp: 1.0,
                    width: 0.5,
                },
            },
            tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatRow {
    pub trial: usize,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub dim: usize,
    pub t: f64,
    pub kappa: f64,
    pub u: f64,
    pub vn: f64,
    pub diff: f64,
}

pub(crate) struct Heat;

impl Study for Heat {
    type Params = HeatParams;
    type Row = HeatRow;

    fn validate(_: &ExperimentConfig, p: &HeatParams) -> Result<()> {
        require(p.trials > 0, || "empty trial set".into())?;
        require(
            p.max_particles > 0 && p.max_dim > 0 && p.mc_samples > 0,
            || "max_particles, max_dim and mc_samples must be positive".into(),
        )?;
        require(
            p.horizon > 0.0 && p.kappa_max >= 0.0 && p.spread > 0.0,
            || "need horizon > 0, kappa_max >= 0 and spread > 0".into(),
        )?;
        require(p.tol >= 0.0, || "tol must be nonnegative".into())?;
        p.terminal
            .build()
            .map(|_| ())
            .map_err(|e| quantlab_core::LabError::Config(e.to_string()))
    }

    fn rows(cfg: &ExperimentConfig, p: &HeatParams) -> Result<Vec<HeatRow>> {
        let g = p.terminal.build()?;
        let tasks: Vec<(u64, usize)> = cfg
            .seeds
            .iter()
            .flat_map(|&s| (0..p.trials).map(move |i| (s, i)))
            .collect();
        tasks
            .par_iter()
            .map(|&(seed, trial)| {
                let mut rng = stream(seed, &[0x4E, trial as u64]);
                let n = rng.random_range(1..=p.max_particles);
                let dim = rng.random_range(1..=p.max_dim);
                let xs: Vec<f64> = (0..n * dim)
                    .map(|_| rng.random_range(-p.spread..p.spread))
                    .collect();
                let t = rng.random_range(0.0..=p.horizon);
                let zero = p.zero_kappa_every > 0 && trial % p.zero_kappa_every == 0;
                let kappa = if zero {
                    0.0
                } else {
                    rng.random_range(0.0..=p.kappa_max)
                };
                let mc_seed = derive_seed(seed, &[0x4F, trial as u64]);
                let m = EmpiricalMeasure::new(dim, xs.clone())?;
                let u = heat_value(g.as_ref(), &m, t, p.horizon, kappa, p.mc_samples, mc_seed)?;
                let vn = heat_value_particles(
                    g.as_ref(),
                    &xs,
                    dim,
                    t,
                    p.horizon,
                    kappa,
                    p.mc_samples,
                    mc_seed,
                )?;
                Ok(HeatRow {
                    trial,
                    seed,
                    n,
                    dim,
                    t,
                    kappa,
                    u,
                    vn,
                    diff: (u - vn).abs(),
                })
            })
            .collect()
    }

    fn judge(
        cfg: &ExperimentConfig,
        p: &HeatParams,
        rows: &[HeatRow],
    ) -> Result<(Vec<Verdict>, serde_json::Value)> {
        let expected = p.trials * cfg.seeds.len();
        let worst = rows.iter().map(|r| r.diff).fold(0.0, f64::max);
        let finite = rows.iter().all(|r| r.u.is_finite() && r.vn.is_finite());
        let verdicts = vec![
            Verdict::new(
                "rows complete",
                rows.len() == expected,
                format!("{} rows, expected {expected}", rows.len()),
            ),
            Verdict::new(
                "projection exact",
                finite && worst <= p.tol,
                format!("max |U - V^N| = {worst:.3e} <= {:.0e}", p.tol),
            ),
        ];
        Ok((verdicts, json!({ "max_diff": worst })))
    }
}

/// Shared-seed comparison of the heat-case value on measures and on
/// particle configurations.
pub fn run_heat_projection(cfg: &ExperimentConfig) -> Result<Report<HeatRow>> {
    run_study::<Heat>(ExperimentKind::HeatProjection, cfg)
}
