use quantlab_core::rng::{derive_seed, stream};
use quantlab_core::{
    lp_norm, reference_rate, simultaneous_quantize, AtomSpace, Norm, QuantizeOptions,
    RandomVariable, Result,
};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    check_sweep, grouped_means, require, run_study, ExperimentKind, Report, Study, Verdict,
};
use crate::config::ExperimentConfig;
use quantlab_core::quantizer::floor_pow;

/// `X` and `Y` are independent uniform draws on `[-h, h]^dim` with
/// `h = 1/sqrt(dim)`, one value per atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimultaneousParams {
    pub n: usize,
    pub dim: usize,
    pub atoms: usize,
    pub alphas: Vec<f64>,
    pub bound_constant: f64,
}

impl Default for SimultaneousParams {
    fn default() -> Self {
        Self {
            n: 512,
            dim: 3,
            atoms: 4096,
            alphas: vec![0.3, 0.5, 0.7],
            bound_constant: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimultaneousRow {
    pub alpha: f64,
    pub seed: u64,
    #[serde(rename = "N")]
    pub n: usize,
    pub n1: usize,
    pub n2: usize,
    pub remainder: usize,
    pub rho_x: f64,
    pub rho_y: f64,
    pub bound_x: f64,
    pub bound_y: f64,
}

fn draw(p: &SimultaneousParams, seed: u64, which: u64) -> Result<RandomVariable> {
    let h = 1.0 / (p.dim as f64).sqrt();
    let mut rng = stream(seed, &[0x5A, which]);
    let vals = (0..p.atoms * p.dim)
        .map(|_| rng.random_range(-h..h))
        .collect();
    RandomVariable::new(AtomSpace::new(p.atoms)?, p.dim, vals)
}

pub(crate) struct Simultaneous;

impl Study for Simultaneous {
    type Params = SimultaneousParams;
    type Row = SimultaneousRow;

    fn validate(_: &ExperimentConfig, p: &SimultaneousParams) -> Result<()> {
        require(p.dim > 0, || "dim must be positive".into())?;
        check_sweep("simultaneous", &[p.n], p.atoms)?;
        require(p.alphas.len() >= 2, || "need at least two alphas".into())?;
        require(p.alphas.iter().all(|&a| a > 0.0 && a < 1.0), || {
            "alphas must lie in (0, 1)".into()
        })?;
        require(p.alphas.windows(2).all(|w| w[0] < w[1]), || {
            "alphas must be increasing".into()
        })?;
        require(p.bound_constant > 0.0, || {
            "bound_constant must be positive".into()
        })
    }

    fn rows(cfg: &ExperimentConfig, p: &SimultaneousParams) -> Result<Vec<SimultaneousRow>> {
        let tasks: Vec<(f64, u64)> = p
            .alphas
            .iter()
            .flat_map(|&a| cfg.seeds.iter().map(move |&s| (a, s)))
            .collect();
        tasks
            .par_iter()
            .map(|&(alpha, seed)| {
                let x = draw(p, seed, 0)?;
                let y = draw(p, seed, 1)?;
                let opts = QuantizeOptions::default()
                    .with_restarts(cfg.restarts)
                    .with_seed(derive_seed(seed, &[p.n as u64, alpha.to_bits()]));
                let s = simultaneous_quantize(&x, &y, p.n, alpha, &opts)?;
                Ok(SimultaneousRow {
                    alpha,
                    seed,
                    n: p.n,
                    n1: s.n1,
                    n2: s.n2,
                    remainder: s.remainder,
                    rho_x: s.rho_x,
                    rho_y: s.rho_y,
                    bound_x: p.bound_constant
                        * lp_norm(&x, Norm::Inf)
                        * reference_rate(s.n1, p.dim),
                    bound_y: p.bound_constant
                        * lp_norm(&y, Norm::Inf)
                        * reference_rate(s.n2, p.dim),
                })
            })
            .collect()
    }

    fn judge(
        cfg: &ExperimentConfig,
        p: &SimultaneousParams,
        rows: &[SimultaneousRow],
    ) -> Result<(Vec<Verdict>, serde_json::Value)> {
        let expected = p.alphas.len() * cfg.seeds.len();
        let complete = rows.len() == expected
            && p.alphas
                .iter()
                .all(|&a| rows.iter().filter(|r| r.alpha == a).count() == cfg.seeds.len());
        let mut verdicts = vec![Verdict::new(
            "rows complete",
            complete,
            format!("{} rows, expected {expected}", rows.len()),
        )];
        let x = grouped_means(rows.iter().map(|r| (r.alpha.to_bits(), r.rho_x)));
        let y = grouped_means(rows.iter().map(|r| (r.alpha.to_bits(), r.rho_y)));
        let xs: Vec<f64> = x.iter().map(|e| e.1).collect();
        let ys: Vec<f64> = y.iter().map(|e| e.1).collect();
        verdicts.push(Verdict::new(
            "rho_X decreasing in alpha",
            complete && xs.windows(2).all(|w| w[1] < w[0]),
            format!("{xs:?}"),
        ));
        verdicts.push(Verdict::new(
            "rho_Y increasing in alpha",
            complete && ys.windows(2).all(|w| w[1] > w[0]),
            format!("{ys:?}"),
        ));
        let worst = rows
            .iter()
            .map(|r| (r.rho_x / r.bound_x).max(r.rho_y / r.bound_y))
            .fold(0.0, f64::max);
        let splits_ok = rows.iter().all(|r| {
            r.n1 == floor_pow(r.n, r.alpha).max(1)
                && r.n2 == floor_pow(r.n, 1.0 - r.alpha).max(1)
                && r.n1 * r.n2 + r.remainder == r.n
        });
        verdicts.push(Verdict::new(
            "within bounds",
            splits_ok && worst <= 1.0,
            format!("largest rho / bound = {worst:.4}"),
        ));
        let summary = json!({
            "alphas": p.alphas,
            "mean_rho_x": xs,
            "mean_rho_y": ys,
        });
        Ok((verdicts, summary))
    }
}

/// Alpha sweep of the joint quantization of two variables at fixed `N`.
pub fn run_simultaneous_tradeoff(cfg: &ExperimentConfig) -> Result<Report<SimultaneousRow>> {
    run_study::<Simultaneous>(ExperimentKind::SimultaneousTradeoff, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use quantlab_core::LabError;

    fn cfg(params: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!("seeds = [1, 2]\nrestarts = 2\n[params]\n{params}"))
            .unwrap()
    }

    #[test]
    fn small_sweep_trends() {
        let c = cfg("n = 36\ndim = 2\natoms = 720\nalphas = [0.2, 0.5, 0.8]");
        let r = run_simultaneous_tradeoff(&c).unwrap();
        assert_eq!(r.rows.len(), 6);
        assert!(r.passed(), "{:?}", r.verdicts);
        assert_eq!((r.rows[2].n1, r.rows[2].n2), (6, 6));
        assert_eq!(r.rows[2].remainder, 0);
    }

    #[test]
    fn bad_alphas_rejected() {
        for bad in [
            "alphas = [0.5]",
            "alphas = [0.5, 0.3]",
            "alphas = [0.0, 0.5]",
            "n = 7",
        ] {
            assert!(
                matches!(
                    run_simultaneous_tradeoff(&cfg(bad)),
                    Err(LabError::Config(_))
                ),
                "{bad}"
            );
        }
    }
}
