use quantlab_core::hjb::{hopf_lax_example_u, vn_example_value, ExampleConfig};
use quantlab_core::quantizer::quantize_measure;
use quantlab_core::rng::{derive_seed, stream};
use quantlab_core::{rate_fit, EmpiricalMeasure, QuantizeOptions, Result, SampledMeasure};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{grouped_means, require, run_study, ExperimentKind, Report, Study, Verdict};
use crate::config::ExperimentConfig;

/// How the Lebesgue measure on the unit cube is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    /// Midpoint grid; `samples_per_point * N` must be a perfect `dim`-th power.
    Grid,
    /// Seeded i.i.d. uniform points.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSweep {
    pub dim: usize,
    pub ns: Vec<usize>,
    pub samples_per_point: usize,
    pub reference: Reference,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_gap: Option<f64>,
    #[serde(default = "default_rel_tol")]
    pub expected_rel_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_max: Option<f64>,
}

fn default_rel_tol() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapParams {
    pub sweeps: Vec<GapSweep>,
    pub lower_factor: f64,
    pub upper_factor: f64,
    pub example_restarts: usize,
    pub max_iters: usize,
}

impl Default for GapParams {
    fn default() -> Self {
        Self {
            sweeps: vec![
                GapSweep {
                    dim: 1,
                    ns: vec![1],
                    samples_per_point: 4096,
                    reference: Reference::Grid,
                    expected_gap: Some(0.2470),
                    expected_rel_tol: 0.02,
                    slope_min: None,
                    slope_max: None,
                },
                GapSweep {
                    dim: 3,
                    ns: vec![8, 27, 64, 125, 216],
                    samples_per_point: 16,
                    reference: Reference::Random,
                    expected_gap: None,
                    expected_rel_tol: 0.02,
                    slope_min: Some(-0.45),
                    slope_max: Some(-0.20),
                },
            ],
            lower_factor: 0.9,
            upper_factor: 3.0,
            example_restarts: 3,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub dim: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub samples: usize,
    pub rhat: f64,
    pub vn: f64,
    pub u: f64,
    pub gap: f64,
    pub lower: f64,
    pub upper: f64,
}

fn grid_side(count: usize, dim: usize) -> Option<usize> {
    let side = (count as f64).powf(1.0 / dim as f64).round() as usize;
    (side.checked_pow(dim as u32) == Some(count)).then_some(side)
}

fn reference(s: &GapSweep, n: usize, seed: u64) -> Result<SampledMeasure> {
    let count = s.samples_per_point * n;
    match s.reference {
        Reference::Grid => {
            SampledMeasure::cube_grid(s.dim, grid_side(count, s.dim).expect("validated"))
        }
        Reference::Random => SampledMeasure::uniform_cube(
            s.dim,
            count,
            &mut stream(seed, &[0xE6, s.dim as u64, n as u64]),
        ),
    }
}

pub(crate) struct ExampleGap;

impl Study for ExampleGap {
    type Params = GapParams;
    type Row = GapRow;

    fn validate(_: &ExperimentConfig, p: &GapParams) -> Result<()> {
        require(!p.sweeps.is_empty(), || "no sweeps configured".into())?;
        require(
            p.lower_factor >= 0.0 && p.upper_factor > p.lower_factor,
            || "need 0 <= lower_factor < upper_factor".into(),
        )?;
        require(p.example_restarts > 0 && p.max_iters > 0, || {
            "example_restarts and max_iters must be positive".into()
        })?;
        for (i, s) in p.sweeps.iter().enumerate() {
            require(s.dim > 0 && s.samples_per_point > 0, || {
                format!("sweep {i}: dim and samples_per_point must be positive")
            })?;
            require(p.sweeps[..i].iter().all(|o| o.dim != s.dim), || {
                format!("sweep {i}: dimension {} appears twice", s.dim)
            })?;
            require(!s.ns.is_empty() && s.ns.iter().all(|&n| n > 0), || {
                format!("sweep {i}: empty or zero N sweep")
            })?;
            if s.reference == Reference::Grid {
                for &n in &s.ns {
                    require(grid_side(s.samples_per_point * n, s.dim).is_some(), || {
                        format!(
                            "sweep {i}: {} points do not form a {}-dimensional grid",
                            s.samples_per_point * n,
                            s.dim
                        )
                    })?;
                }
            }
            match (s.slope_min, s.slope_max) {
                (None, None) => {}
                (Some(lo), Some(hi)) => {
                    require(lo < hi, || format!("sweep {i}: empty slope range"))?;
                    require(s.ns.len() >= 2, || {
                        format!("sweep {i}: need two N to fit a slope")
                    })?;
                }
                _ => {
                    return super::config_err(format!(
                        "sweep {i}: give both slope_min and slope_max"
                    ))
                }
            }
        }
        Ok(())
    }

    fn rows(cfg: &ExperimentConfig, p: &GapParams) -> Result<Vec<GapRow>> {
        let tasks: Vec<(&GapSweep, usize, u64)> = p
            .sweeps
            .iter()
            .flat_map(|s| {
                s.ns.iter()
                    .flat_map(move |&n| cfg.seeds.iter().map(move |&seed| (s, n, seed)))
            })
            .collect();
        tasks
            .par_iter()
            .map(|&(s, n, seed)| {
                let leb = reference(s, n, seed)?;
                let opts = QuantizeOptions::default()
                    .with_restarts(cfg.restarts)
                    .with_seed(derive_seed(seed, &[s.dim as u64, n as u64]));
                let (_, q) = quantize_measure(leb.samples(), n, None, &opts)?;
                let x = EmpiricalMeasure::new(s.dim, q.centroids.clone())?;
                let u = hopf_lax_example_u(&x, 0.0, &leb)?;
                let ecfg = ExampleConfig {
                    restarts: p.example_restarts,
                    max_iters: p.max_iters,
                    seed: derive_seed(seed, &[0xE7, s.dim as u64, n as u64]),
                    ..ExampleConfig::default()
                };
                let vn = vn_example_value(&x, &leb, &ecfg)?.value;
                let r = q.rho_value;
                Ok(GapRow {
                    dim: s.dim,
                    n,
                    seed,
                    samples: leb.len(),
                    rhat: r,
                    vn,
                    u,
                    gap: vn - u,
                    lower: p.lower_factor * (r - r * r / 2.0),
                    upper: p.upper_factor * r,
                })
            })
            .collect()
    }

    fn judge(
        cfg: &ExperimentConfig,
        p: &GapParams,
        rows: &[GapRow],
    ) -> Result<(Vec<Verdict>, serde_json::Value)> {
        let expected: usize = p.sweeps.iter().map(|s| s.ns.len()).sum::<usize>() * cfg.seeds.len();
        let mut verdicts = vec![Verdict::new(
            "rows complete",
            rows.len() == expected,
            format!("{} rows, expected {expected}", rows.len()),
        )];
        let negative = rows
            .iter()
            .filter(|r| r.gap.is_nan() || r.gap < 0.0)
            .count();
        verdicts.push(Verdict::new(
            "gap nonnegative",
            negative == 0,
            format!("{negative} negative gaps"),
        ));
        let outside: Vec<String> = rows
            .iter()
            .filter(|r| !(r.gap >= r.lower && r.gap <= r.upper))
            .map(|r| {
                format!(
                    "d{} N={} seed {}: {:.5} not in [{:.5}, {:.5}]",
                    r.dim, r.n, r.seed, r.gap, r.lower, r.upper
                )
            })
            .collect();
        verdicts.push(Verdict::new(
            "gap within bounds",
            outside.is_empty(),
            if outside.is_empty() {
                "all rows inside".to_string()
            } else {
                outside.join("; ")
            },
        ));
        let mut slopes = serde_json::Map::new();
        for s in &p.sweeps {
            let means = grouped_means(rows.iter().filter(|r| r.dim == s.dim).map(|r| (r.n, r.gap)));
            if let Some(target) = s.expected_gap {
                let worst = means
                    .iter()
                    .map(|&(_, g)| (g - target).abs() / target)
                    .fold(f64::NAN, f64::max);
                verdicts.push(Verdict::new(
                    format!("d{} gap matches {target}", s.dim),
                    !means.is_empty() && worst <= s.expected_rel_tol,
                    format!("relative deviation {worst:.4} <= {}", s.expected_rel_tol),
                ));
            }
            if let (Some(lo), Some(hi)) = (s.slope_min, s.slope_max) {
                let name = format!("d{} gap slope", s.dim);
                let pts: Vec<(f64, f64)> = means.iter().map(|&(n, g)| (n as f64, g)).collect();
                match rate_fit(&pts) {
                    Ok(fit) => {
                        verdicts.push(Verdict::new(
                            name,
                            fit.slope >= lo && fit.slope <= hi,
                            format!("slope {:.4} in [{lo}, {hi}]", fit.slope),
                        ));
                        slopes.insert(s.dim.to_string(), json!(fit.slope));
                    }
                    Err(e) => verdicts.push(Verdict::new(name, false, e.to_string())),
                }
            }
        }
        Ok((verdicts, json!({ "slopes": slopes })))
    }
}

/// Gap between the particle and mean-field values of the example problem
/// at quantizer configurations of the Lebesgue measure.
pub fn run_example_gap(cfg: &ExperimentConfig) -> Result<Report<GapRow>> {
    run_study::<ExampleGap>(ExperimentKind::ExampleGap, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use quantlab_core::LabError;

    fn cfg(params: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!("seeds = [1]\nrestarts = 2\n{params}")).unwrap()
    }

    #[test]
    fn grid_side_detects_powers() {
        assert_eq!(grid_side(64, 3), Some(4));
        assert_eq!(grid_side(100, 1), Some(100));
        assert_eq!(grid_side(50, 2), None);
    }

    #[test]
    fn one_dimensional_gap_is_bracketed() {
        let c = cfg("[[params.sweeps]]\ndim = 1\nns = [1, 2, 4]\nsamples_per_point = 256\nreference = \"grid\"");
        let r = run_example_gap(&c).unwrap();
        assert!(r.passed(), "{:?}", r.verdicts);
        assert!(r.rows.windows(2).all(|w| w[1].gap < w[0].gap));
    }

    #[test]
    fn invalid_grids_and_ranges_rejected() {
        for bad in [
            "[[params.sweeps]]\ndim = 2\nns = [2]\nsamples_per_point = 4\nreference = \"grid\"",
            "[[params.sweeps]]\ndim = 1\nns = [2]\nsamples_per_point = 4\nreference = \"grid\"\nslope_min = -1.0",
            "[[params.sweeps]]\ndim = 1\nns = []\nsamples_per_point = 4\nreference = \"random\"",
        ] {
            assert!(matches!(run_example_gap(&cfg(bad)), Err(LabError::Config(_))), "{bad}");
        }
    }
}
