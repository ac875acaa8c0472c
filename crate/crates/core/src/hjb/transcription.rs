use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::measure::EmpiricalMeasure;
use crate::rng::stream;

use super::problem::{BoundKind, ControlProblem, Lagrangian, Method, ValueReport};

/// How controls relate to the common-noise scenarios when `kappa > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// One control sequence shared by every scenario. Feasible for the
    /// stochastic problem, so the value is an upper bound.
    OpenLoop,
    /// A separate control sequence per scenario, chosen with the scenario's
    /// noise known in advance. The value is a lower bound.
    Anticipative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptionConfig {
    pub steps: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub scenarios: usize,
    pub mode: NoiseMode,
    pub seed: u64,
    /// Standard deviation of random initial controls for restarts after the
    /// first, which starts from zero.
    pub init_scale: f64,
}

impl Default for TranscriptionConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            max_iters: 500,
            tol: 1e-8,
            restarts: 1,
            scenarios: 64,
            mode: NoiseMode::OpenLoop,
            seed: 0,
            init_scale: 0.1,
        }
    }
}

/// Discretized control problem from `(t0, x0)`: controls are `steps x N x d`
/// row-major, the state follows forward Euler.
pub struct Transcription<'a> {
    problem: &'a ControlProblem,
    lagrangian: &'a dyn Lagrangian,
    x0: Vec<f64>,
    n: usize,
    d: usize,
    steps: usize,
    dt: f64,
    /// Per scenario, `steps x d` common-noise increments.
    noise: Vec<Vec<f64>>,
}

impl<'a> Transcription<'a> {
    pub fn new(
        problem: &'a ControlProblem,
        t0: f64,
        x0: &EmpiricalMeasure,
        steps: usize,
        scenarios: usize,
        seed: u64,
    ) -> Result<Self> {
        let lagrangian = problem.hamiltonian.lagrangian().ok_or_else(|| {
            LabError::Unsupported(format!(
                "the {} Hamiltonian has no Lagrangian; transcription needs a convex problem",
                problem.hamiltonian.inner.name()
            ))
        })?;
        if !(t0 >= 0.0 && t0 < problem.horizon) {
            return invalid(format!("t0 = {t0} outside [0, {})", problem.horizon));
        }
        if steps == 0 {
            return invalid("need at least one time step");
        }
        let dt = (problem.horizon - t0) / steps as f64;
        let d = x0.dim();
        let noise = if problem.kappa > 0.0 {
            let scale = (2.0 * problem.kappa * dt).sqrt();
            (0..scenarios.max(1))
                .map(|s| {
                    let mut rng = stream(seed, &[0xA0, s as u64]);
                    (0..steps * d)
                        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect()
        } else {
            vec![vec![0.0; steps * d]]
        };
        Ok(Self {
            problem,
            lagrangian,
            x0: x0.coords().to_vec(),
            n: x0.len(),
            d,
            steps,
            dt,
            noise,
        })
    }

    pub fn control_len(&self) -> usize {
        self.steps * self.n * self.d
    }

    pub fn scenarios(&self) -> usize {
        self.noise.len()
    }

    /// Cost along one scenario; fills `grad` with the adjoint gradient when
    /// given.
    pub fn scenario_cost(
        &self,
        scenario: usize,
        controls: &[f64],
        grad: Option<&mut [f64]>,
    ) -> Result<f64> {
        let nd = self.n * self.d;
        if controls.len() != self.control_len() {
            return invalid(format!(
                "expected {} controls, got {}",
                self.control_len(),
                controls.len()
            ));
        }
        let noise = &self.noise[scenario];
        let mut states = Vec::with_capacity((self.steps + 1) * nd);
        states.extend_from_slice(&self.x0);
        let mut cost = 0.0;
        for k in 0..self.steps {
            let x = &states[k * nd..(k + 1) * nd];
            let a = &controls[k * nd..(k + 1) * nd];
            cost += self.dt * self.lagrangian.running(x, a, self.d);
            let next: Vec<f64> = (0..nd)
                .map(|j| x[j] + self.dt * a[j] + noise[k * self.d + j % self.d])
                .collect();
            states.extend(next);
        }
        let terminal = EmpiricalMeasure::new(self.d, states[self.steps * nd..].to_vec())
            .map_err(|_| LabError::Numeric("rollout diverged".into()))?;
        cost += self.problem.terminal.value(&terminal)?;
        if !cost.is_finite() {
            return Err(LabError::Numeric("rollout cost is not finite".into()));
        }
        if let Some(grad) = grad {
            let mut lambda = self.problem.terminal.gradient(&terminal)?;
            let (mut gx, mut ga) = (vec![0.0; nd], vec![0.0; nd]);
            for k in (0..self.steps).rev() {
                let x = &states[k * nd..(k + 1) * nd];
                let a = &controls[k * nd..(k + 1) * nd];
                self.lagrangian.running_grad(x, a, self.d, &mut gx, &mut ga);
                for j in 0..nd {
                    grad[k * nd + j] = self.dt * (ga[j] + lambda[j]);
                    lambda[j] += self.dt * gx[j];
                }
            }
        }
        Ok(cost)
    }

    /// Scenario average with shared controls.
    pub fn cost(&self, controls: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for s in 0..self.scenarios() {
            total += self.scenario_cost(s, controls, None)?;
        }
        Ok(total / self.scenarios() as f64)
    }

    pub fn cost_and_gradient(&self, controls: &[f64]) -> Result<(f64, Vec<f64>)> {
        let s_count = self.scenarios();
        let mut grad = vec![0.0; self.control_len()];
        let mut buf = vec![0.0; self.control_len()];
        let mut total = 0.0;
        for s in 0..s_count {
            total += self.scenario_cost(s, controls, Some(&mut buf))?;
            for (g, b) in grad.iter_mut().zip(&buf) {
                *g += b;
            }
        }
        let inv = 1.0 / s_count as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok((total * inv, grad))
    }

    fn initial(&self, restart: usize, scale: f64, seed: u64) -> Vec<f64> {
        if restart == 0 {
            return vec![0.0; self.control_len()];
        }
        let mut rng = stream(seed, &[0xB0, restart as u64]);
        (0..self.control_len())
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    fn initial_step(&self) -> f64 {
        self.n as f64 / self.dt
    }

    pub fn solve(&self, cfg: &TranscriptionConfig) -> Result<ValueReport> {
        let restarts = cfg.restarts.max(1);
        let shared = self.problem.kappa == 0.0 || cfg.mode == NoiseMode::OpenLoop;
        let runs: Vec<Result<Descent>> = (0..restarts)
            .into_par_iter()
            .map(|r| {
                let u0 = self.initial(r, cfg.init_scale, cfg.seed);
                if shared {
                    descend(|u| self.cost_and_gradient(u), u0, cfg, self.initial_step())
                } else {
                    self.solve_anticipative(u0, cfg)
                }
            })
            .collect();
        let mut best: Option<Descent> = None;
        for run in runs {
            let run = run?;
            if best.as_ref().is_none_or(|b| run.value < b.value) {
                best = Some(run);
            }
        }
        let best = best.expect("at least one restart");
        let bound = if shared {
            BoundKind::Upper
        } else {
            BoundKind::Lower
        };
        Ok(ValueReport {
            value: best.value,
            iterations: best.iterations,
            grad_norm: best.grad_norm,
            converged: best.converged,
            method: Method::Transcription,
            bound,
            minimizer: Some(best.point),
        })
    }

    fn solve_anticipative(&self, u0: Vec<f64>, cfg: &TranscriptionConfig) -> Result<Descent> {
        let s_count = self.scenarios();
        let mut value = 0.0;
        let mut iterations = 0;
        let mut grad_norm: f64 = 0.0;
        let mut converged = true;
        let mut point = Vec::with_capacity(s_count * u0.len());
        for s in 0..s_count {
            let run = descend(
                |u| {
                    let mut g = vec![0.0; u.len()];
                    let c = self.scenario_cost(s, u, Some(&mut g))?;
                    Ok((c, g))
                },
                u0.clone(),
                cfg,
                self.initial_step(),
            )?;
            value += run.value;
            iterations = iterations.max(run.iterations);
            grad_norm = grad_norm.max(run.grad_norm);
            converged &= run.converged;
            point.extend(run.point);
        }
        Ok(Descent {
            value: value / s_count as f64,
            point,
            iterations,
            grad_norm,
            converged,
        })
    }
}

struct Descent {
    value: f64,
    point: Vec<f64>,
    iterations: usize,
    grad_norm: f64,
    converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient descent with Armijo backtracking, trial steps from the
/// Barzilai-Borwein formula.
fn descend(
    f: impl Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
    mut u: Vec<f64>,
    cfg: &TranscriptionConfig,
    first_step: f64,
) -> Result<Descent> {
    let (mut fu, mut g) = f(&u)?;
    let mut step = first_step;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        let gn2 = dot(&g, &g);
        if gn2.sqrt() <= cfg.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let mut s = step;
        let accepted = loop {
            let trial: Vec<f64> = u.iter().zip(&g).map(|(x, gi)| x - s * gi).collect();
            match f(&trial) {
                Ok((ft, gt)) if ft <= fu - 1e-4 * s * gn2 => break Some((trial, ft, gt, s)),
                Ok(_) | Err(LabError::Numeric(_)) => {}
                Err(e) => return Err(e),
            }
            s *= 0.5;
            if s * gn2.sqrt() < 1e-14 * (1.0 + dot(&u, &u).sqrt()) {
                break None;
            }
        };
        let Some((next, fnext, gnext, taken)) = accepted else {
            // no descent along the (sub)gradient: a kink or round-off floor
            break;
        };
        let du: Vec<f64> = next.iter().zip(&u).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = gnext.iter().zip(&g).map(|(a, b)| a - b).collect();
        let curv = dot(&du, &dg);
        step = if curv > 0.0 {
            dot(&du, &du) / curv
        } else {
            2.0 * taken
        };
        u = next;
        fu = fnext;
        g = gnext;
    }
    Ok(Descent {
        value: fu,
        grad_norm: dot(&g, &g).sqrt(),
        point: u,
        iterations,
        converged,
    })
}

/// Value of the particle control problem at `(t0, x0)` by direct
/// transcription.
pub fn solve_transcription(
    problem: &ControlProblem,
    t0: f64,
    x0: &EmpiricalMeasure,
    cfg: &TranscriptionConfig,
) -> Result<ValueReport> {
    Transcription::new(problem, t0, x0, cfg.steps, cfg.scenarios, cfg.seed)?.solve(cfg)
}
