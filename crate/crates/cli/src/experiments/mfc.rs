use quantlab_core::hjb::{
    solve_transcription, ControlProblem, HamiltonianConfig, HamiltonianSpec, TerminalConfig,
    TranscriptionConfig,
};
use quantlab_core::rng::{derive_seed, stream};
use quantlab_core::{
    balanced_quantize, rate_fit, wasserstein_1d, AtomSpace, EmpiricalMeasure, Exponent,
    QuantizeOptions, RandomVariable, Result,
};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_sweep, require, run_study, ExperimentKind, Report, Study, Verdict};
use crate::config::ExperimentConfig;

/// Particle values on one-dimensional configurations obtained by quantizing
/// the uniform law on `interval`, compared with the value at
/// `reference_n` particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfcParams {
    pub ns: Vec<usize>,
    pub reference_n: usize,
    pub atoms: usize,
    pub interval: [f64; 2],
    pub horizon: f64,
    pub kappa: f64,
    pub radius: f64,
    pub hamiltonian: HamiltonianConfig,
    pub terminal: TerminalConfig,
    pub steps: usize,
    pub scenarios: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Slack allowed when checking that gaps do not increase.
    pub noise_tol: f64,
    /// The last gap must be below `final_ratio` times the first.
    pub final_ratio: f64,
    /// Random interval pairs for the Lipschitz quotient; 0 disables it.
    pub lipschitz_pairs: usize,
    pub lipschitz_slope_tol: f64,
    pub pair_widths: [f64; 2],
}

impl Default for MfcParams {
    fn default() -> Self {
        Self {
            ns: vec![8, 16, 32, 64],
            reference_n: 512,
            atoms: 4096,
            interval: [0.5, 1.5],
            horizon: 1.0,
            kappa: 0.0,
            radius: 10.0,
            hamiltonian: HamiltonianConfig::Quadratic { coupling: 0.0 },
            terminal: TerminalConfig::W2ToUniformCube {
                cap: 1.0,
                samples_per_point: 32,
                seed: 0,
            },
            steps: 10,
            scenarios: 64,
            max_iters: 2000,
            tol: 1e-10,
            noise_tol: 1e-6,
            final_ratio: 0.5,
            lipschitz_pairs: 20,
            lipschitz_slope_tol: 0.05,
            pair_widths: [0.5, 1.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfcRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub value: f64,
    pub reference_value: f64,
    pub gap: f64,
    /// Largest `|V(x) - V(y)| / d_1(m_x, m_y)` over the sampled pairs.
    pub lip_quotient: f64,
}

fn problem(p: &MfcParams) -> Result<ControlProblem> {
    let h = HamiltonianSpec::new(p.hamiltonian.build(), p.radius)?;
    ControlProblem::new(h, p.terminal.build()?, p.horizon, p.kappa)
}

fn midpoints(lo: f64, width: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + width * (i as f64 + 0.5) / n as f64)
        .collect()
}

struct Solver<'a> {
    problem: ControlProblem,
    p: &'a MfcParams,
    seed: u64,
}

impl Solver<'_> {
    fn value(&self, x: &EmpiricalMeasure) -> Result<f64> {
        let cfg = TranscriptionConfig {
            steps: self.p.steps,
            max_iters: self.p.max_iters,
            tol: self.p.tol,
            scenarios: self.p.scenarios,
            seed: derive_seed(self.seed, &[x.len() as u64]),
            ..TranscriptionConfig::default()
        };
        Ok(solve_transcription(&self.problem, 0.0, x, &cfg)?.value)
    }
}

pub(crate) struct Mfc;

impl Study for Mfc {
    type Params = MfcParams;
    type Row = MfcRow;

    fn validate(_: &ExperimentConfig, p: &MfcParams) -> Result<()> {
        check_sweep("ns", &p.ns, p.atoms)?;
        check_sweep("reference_n", &[p.reference_n], p.atoms)?;
        require(
            p.ns.len() >= 2 && p.ns.windows(2).all(|w| w[0] < w[1]),
            || "ns must hold at least two increasing values".into(),
        )?;
        let max_n = *p.ns.iter().max().expect("nonempty");
        require(p.reference_n >= 8 * max_n, || {
            format!(
                "reference_n = {} must be at least 8 x {max_n}",
                p.reference_n
            )
        })?;
        require(p.interval[0] < p.interval[1], || "empty interval".into())?;
        require(
            p.pair_widths[0] > 0.0 && p.pair_widths[0] <= p.pair_widths[1],
            || "bad pair_widths".into(),
        )?;
        require(p.steps > 0 && p.max_iters > 0 && p.scenarios > 0, || {
            "steps, max_iters and scenarios must be positive".into()
        })?;
        require(p.final_ratio > 0.0 && p.noise_tol >= 0.0, || {
            "bad final_ratio or noise_tol".into()
        })?;
        let pr = problem(p).map_err(|e| quantlab_core::LabError::Config(e.to_string()))?;
        require(pr.hamiltonian.is_convex(), || {
            "the transcription solver needs a convex Hamiltonian".into()
        })
    }

    fn rows(cfg: &ExperimentConfig, p: &MfcParams) -> Result<Vec<MfcRow>> {
        let [lo, hi] = p.interval;
        let x_ref =
            RandomVariable::new(AtomSpace::new(p.atoms)?, 1, midpoints(lo, hi - lo, p.atoms))?;
        let mut sizes = p.ns.clone();
        sizes.push(p.reference_n);
        let mut rows = Vec::new();
        for &seed in &cfg.seeds {
            let solver = Solver {
                problem: problem(p)?,
                p,
                seed,
            };
            let opts = QuantizeOptions::default()
                .with_restarts(cfg.restarts)
                .with_seed(seed);
            let values: Vec<f64> = sizes
                .par_iter()
                .map(|&n| {
                    let q = balanced_quantize(&x_ref, n, &opts)?;
                    solver.value(&EmpiricalMeasure::new(1, q.centroids)?)
                })
                .collect::<Result<_>>()?;
            let reference_value = values[p.ns.len()];
            let pairs: Vec<[(f64, f64); 2]> = (0..p.lipschitz_pairs)
                .map(|i| {
                    let mut rng = stream(seed, &[0x11, i as u64]);
                    let mut side = || {
                        let a = rng.random_range(0.0..1.0);
                        let w = if p.pair_widths[0] < p.pair_widths[1] {
                            rng.random_range(p.pair_widths[0]..p.pair_widths[1])
                        } else {
                            p.pair_widths[0]
                        };
                        (a, w)
                    };
                    [side(), side()]
                })
                .collect();
            let quotients: Vec<f64> =
                p.ns.par_iter()
                    .map(|&n| {
                        let mut best = 0.0f64;
                        for pair in &pairs {
                            let [a, b] =
                                pair.map(|(lo, w)| EmpiricalMeasure::from_1d(&midpoints(lo, w, n)));
                            let (a, b) = (a?, b?);
                            let d1 = wasserstein_1d(&a, &b, Exponent::One)?;
                            if d1 > 0.0 {
                                best = best.max((solver.value(&a)? - solver.value(&b)?).abs() / d1);
                            }
                        }
                        Ok(best)
                    })
                    .collect::<Result<_>>()?;
            for (i, &n) in p.ns.iter().enumerate() {
                rows.push(MfcRow {
                    n,
                    seed,
                    value: values[i],
                    reference_value,
                    gap: (values[i] - reference_value).abs(),
                    lip_quotient: quotients[i],
                });
            }
        }
        Ok(rows)
    }

    fn judge(
        cfg: &ExperimentConfig,
        p: &MfcParams,
        rows: &[MfcRow],
    ) -> Result<(Vec<Verdict>, serde_json::Value)> {
        let mut verdicts = Vec::new();
        let mut summary = serde_json::Map::new();
        for &seed in &cfg.seeds {
            let mine: Vec<&MfcRow> = rows.iter().filter(|r| r.seed == seed).collect();
            let ns: Vec<usize> = mine.iter().map(|r| r.n).collect();
            if ns != p.ns {
                verdicts.push(Verdict::new(
                    format!("seed {seed} rows"),
                    false,
                    format!("N column {ns:?}, expected {:?}", p.ns),
                ));
                continue;
            }
            let gaps: Vec<f64> = mine.iter().map(|r| r.gap).collect();
            let monotone = gaps.windows(2).all(|w| w[1] <= w[0] + p.noise_tol);
            let (first, last) = (gaps[0], gaps[gaps.len() - 1]);
            verdicts.push(Verdict::new(
                format!("seed {seed} gap nonincreasing"),
                monotone,
                format!("{gaps:?} (slack {})", p.noise_tol),
            ));
            verdicts.push(Verdict::new(
                format!("seed {seed} final gap"),
                last < p.final_ratio * first,
                format!("{last:.3e} < {} x {first:.3e}", p.final_ratio),
            ));
            let mut entry = json!({ "gaps": gaps });
            if p.lipschitz_pairs > 0 {
                let name = format!("seed {seed} lipschitz quotient flat");
                let pts: Vec<(f64, f64)> =
                    mine.iter().map(|r| (r.n as f64, r.lip_quotient)).collect();
                match rate_fit(&pts) {
                    Ok(fit) => {
                        verdicts.push(Verdict::new(
                            name,
                            fit.slope.abs() <= p.lipschitz_slope_tol,
                            format!(
                                "log-log slope {:.4}, |slope| <= {}",
                                fit.slope, p.lipschitz_slope_tol
                            ),
                        ));
                        entry["lipschitz_slope"] = json!(fit.slope);
                    }
                    Err(e) => verdicts.push(Verdict::new(name, false, e.to_string())),
                }
            }
            summary.insert(seed.to_string(), entry);
        }
        Ok((verdicts, serde_json::Value::Object(summary)))
    }
}

/// Convergence of particle values toward a large-`N` reference along nested
/// quantizer configurations.
pub fn run_mfc_convergence(cfg: &ExperimentConfig) -> Result<Report<MfcRow>> {
    run_study::<Mfc>(ExperimentKind::MfcConvergence, cfg)
}
