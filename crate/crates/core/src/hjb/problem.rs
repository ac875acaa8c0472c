use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::measure::{semidiscrete_plan, EmpiricalMeasure, SampledMeasure};
use crate::rng::stream;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Projection onto the closed ball of radius `r`.
pub fn project_ball(p: &[f64], r: f64) -> Vec<f64> {
    let n = norm(p);
    if n <= r {
        p.to_vec()
    } else {
        p.iter().map(|v| v * r / n).collect()
    }
}

/// A Hamiltonian `H(x, p, m)`.
pub trait Hamiltonian: Send + Sync + Debug {
    fn name(&self) -> &str;
    fn value(&self, x: &[f64], p: &[f64], m: &EmpiricalMeasure) -> f64;
    /// Bound on `|dH/dp_k|` over `|p| <= radius`.
    fn p_lipschitz(&self, radius: f64) -> f64;
    /// `C_H` with `|H(x,p,m)| <= C_H (1 + |p|^2)` on the states the solvers visit.
    fn growth_constant(&self) -> f64;
    fn lagrangian(&self) -> Option<&dyn Lagrangian> {
        None
    }
    fn is_convex(&self) -> bool {
        self.lagrangian().is_some()
    }
}

/// Running cost of the particle control problem, written on whole particle
/// configurations so interaction through `m^N_x` is differentiated exactly.
pub trait Lagrangian: Send + Sync + Debug {
    /// `(1/N) sum_i L(x^i, a^i, m^N_x)`; `xs` and `a` are `N x d` row-major.
    fn running(&self, xs: &[f64], a: &[f64], d: usize) -> f64;
    /// Gradients of [`Lagrangian::running`] with respect to `xs` and `a`.
    fn running_grad(&self, xs: &[f64], a: &[f64], d: usize, gx: &mut [f64], ga: &mut [f64]);
}

/// `H = |p|^2/2 - c|x - mean(m)|^2/2`, dual to `L = |a|^2/2 + c|x - mean(m)|^2/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub coupling: f64,
}

fn mean_of(xs: &[f64], d: usize) -> Vec<f64> {
    let n = xs.len() / d;
    let mut m = vec![0.0; d];
    for p in xs.chunks_exact(d) {
        for (a, v) in m.iter_mut().zip(p) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= n as f64);
    m
}

impl Hamiltonian for Quadratic {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn value(&self, x: &[f64], p: &[f64], m: &EmpiricalMeasure) -> f64 {
        let mean = m.mean();
        let dx2: f64 = x.iter().zip(&mean).map(|(a, b)| (a - b).powi(2)).sum();
        0.5 * p.iter().map(|v| v * v).sum::<f64>() - 0.5 * self.coupling * dx2
    }

    fn p_lipschitz(&self, radius: f64) -> f64 {
        radius
    }

    fn growth_constant(&self) -> f64 {
        0.5_f64.max(self.coupling.abs())
    }

    fn lagrangian(&self) -> Option<&dyn Lagrangian> {
        Some(self)
    }
}

impl Lagrangian for Quadratic {
    fn running(&self, xs: &[f64], a: &[f64], d: usize) -> f64 {
        let n = (xs.len() / d) as f64;
        let kinetic: f64 = a.iter().map(|v| v * v).sum::<f64>() / 2.0;
        let spread = if self.coupling != 0.0 {
            let mean = mean_of(xs, d);
            xs.chunks_exact(d)
                .map(|p| {
                    p.iter()
                        .zip(&mean)
                        .map(|(u, v)| (u - v).powi(2))
                        .sum::<f64>()
                })
                .sum::<f64>()
                * self.coupling
                / 2.0
        } else {
            0.0
        };
        (kinetic + spread) / n
    }

    fn running_grad(&self, xs: &[f64], a: &[f64], d: usize, gx: &mut [f64], ga: &mut [f64]) {
        let n = (xs.len() / d) as f64;
        for (g, v) in ga.iter_mut().zip(a) {
            *g = v / n;
        }
        if self.coupling != 0.0 {
            let mean = mean_of(xs, d);
            for (i, g) in gx.iter_mut().enumerate() {
                *g = self.coupling * (xs[i] - mean[i % d]) / n;
            }
        } else {
            gx.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

/// `H = |p|` (`sign = 1`) or `H = -|p|` (`sign = -1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsP {
    pub sign: f64,
}

impl Hamiltonian for AbsP {
    fn name(&self) -> &str {
        if self.sign >= 0.0 {
            "abs"
        } else {
            "neg-abs"
        }
    }

    fn value(&self, _x: &[f64], p: &[f64], _m: &EmpiricalMeasure) -> f64 {
        self.sign * norm(p)
    }

    fn p_lipschitz(&self, _radius: f64) -> f64 {
        1.0
    }

    fn growth_constant(&self) -> f64 {
        1.0
    }

    fn is_convex(&self) -> bool {
        self.sign >= 0.0
    }
}

/// `H = |p| + a sin(b p_1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonconvexSin {
    pub a: f64,
    pub b: f64,
}

impl Hamiltonian for NonconvexSin {
    fn name(&self) -> &str {
        "nonconvex-sin"
    }

    fn value(&self, _x: &[f64], p: &[f64], _m: &EmpiricalMeasure) -> f64 {
        norm(p) + self.a * (self.b * p[0]).sin()
    }

    fn p_lipschitz(&self, _radius: f64) -> f64 {
        1.0 + (self.a * self.b).abs()
    }

    fn growth_constant(&self) -> f64 {
        1.0 + self.a.abs()
    }
}

/// `H = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroHamiltonian;

impl Hamiltonian for ZeroHamiltonian {
    fn name(&self) -> &str {
        "zero"
    }

    fn value(&self, _x: &[f64], _p: &[f64], _m: &EmpiricalMeasure) -> f64 {
        0.0
    }

    fn p_lipschitz(&self, _radius: f64) -> f64 {
        0.0
    }

    fn growth_constant(&self) -> f64 {
        0.0
    }

    fn is_convex(&self) -> bool {
        true
    }
}

/// A Hamiltonian together with the truncation radius applied to `p`.
#[derive(Debug, Clone)]
pub struct HamiltonianSpec {
    pub inner: Arc<dyn Hamiltonian>,
    pub radius: f64,
}

impl HamiltonianSpec {
    pub fn new(inner: Arc<dyn Hamiltonian>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return invalid(format!("truncation radius must be positive, got {radius}"));
        }
        Ok(Self { inner, radius })
    }

    /// `H(x, pi_R(p), m)`.
    pub fn value(&self, x: &[f64], p: &[f64], m: &EmpiricalMeasure) -> f64 {
        if norm(p) <= self.radius {
            self.inner.value(x, p, m)
        } else {
            self.inner.value(x, &project_ball(p, self.radius), m)
        }
    }

    pub fn p_lipschitz(&self) -> f64 {
        self.inner.p_lipschitz(self.radius)
    }

    pub fn growth_constant(&self) -> f64 {
        self.inner.growth_constant()
    }

    pub fn lagrangian(&self) -> Option<&dyn Lagrangian> {
        self.inner.lagrangian()
    }

    pub fn is_convex(&self) -> bool {
        self.inner.is_convex()
    }
}

/// A terminal cost `G(m)`.
pub trait TerminalCost: Send + Sync + Debug {
    fn name(&self) -> &str;
    fn value(&self, m: &EmpiricalMeasure) -> Result<f64>;
    /// Gradient of `x -> G(m^N_x)` with the layout of `m.coords()`; a
    /// subgradient where `G` has kinks.
    fn gradient(&self, m: &EmpiricalMeasure) -> Result<Vec<f64>>;
    /// `C_G` with `|G| <= C_G`.
    fn bound(&self) -> f64;
    /// Lipschitz constant with respect to `d_1`, when one exists.
    fn lipschitz(&self) -> Option<f64>;
}

pub type TerminalSpec = Arc<dyn TerminalCost>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantTerminal(pub f64);

impl TerminalCost for ConstantTerminal {
    fn name(&self) -> &str {
        "constant"
    }

    fn value(&self, _m: &EmpiricalMeasure) -> Result<f64> {
        Ok(self.0)
    }

    fn gradient(&self, m: &EmpiricalMeasure) -> Result<Vec<f64>> {
        Ok(vec![0.0; m.coords().len()])
    }

    fn bound(&self) -> f64 {
        self.0.abs()
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Point cost `g` integrated against `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "g", rename_all = "kebab-case")]
pub enum PointCost {
    /// `min(|x|, cap)`
    CappedAbs { cap: f64 },
    /// `amp * exp(-|x|^2 / (2 width^2))`
    Bump { amp: f64, width: f64 },
}

impl PointCost {
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            PointCost::CappedAbs { cap } => norm(x).min(cap),
            PointCost::Bump { amp, width } => {
                amp * (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * width * width)).exp()
            }
        }
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match *self {
            PointCost::CappedAbs { cap } => {
                let r = norm(x);
                for (o, v) in out.iter_mut().zip(x) {
                    *o = if r > 0.0 && r < cap { v / r } else { 0.0 };
                }
            }
            PointCost::Bump { width, .. } => {
                let e = self.value(x);
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -e * v / (width * width);
                }
            }
        }
    }

    fn sup(&self) -> f64 {
        match *self {
            PointCost::CappedAbs { cap } => cap.abs(),
            PointCost::Bump { amp, .. } => amp.abs(),
        }
    }

    fn lipschitz(&self) -> f64 {
        match *self {
            PointCost::CappedAbs { .. } => 1.0,
            PointCost::Bump { amp, width } => amp.abs() / width * (-0.5f64).exp(),
        }
    }
}

/// `G(m) = int g dm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanOfG(pub PointCost);

impl TerminalCost for MeanOfG {
    fn name(&self) -> &str {
        "mean-of-g"
    }

    fn value(&self, m: &EmpiricalMeasure) -> Result<f64> {
        Ok(m.points().map(|p| self.0.value(p)).sum::<f64>() / m.len() as f64)
    }

    fn gradient(&self, m: &EmpiricalMeasure) -> Result<Vec<f64>> {
        let n = m.len() as f64;
        let mut out = vec![0.0; m.coords().len()];
        for (p, o) in m.points().zip(out.chunks_exact_mut(m.dim())) {
            self.0.gradient(p, o);
            o.iter_mut().for_each(|v| *v /= n);
        }
        Ok(out)
    }

    fn bound(&self) -> f64 {
        self.0.sup()
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.0.lipschitz())
    }
}

/// `G(m) = min(scale * |mean(m)|, cap)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsMean {
    pub scale: f64,
    pub cap: f64,
}

impl TerminalCost for AbsMean {
    fn name(&self) -> &str {
        "abs-mean"
    }

    fn value(&self, m: &EmpiricalMeasure) -> Result<f64> {
        Ok((self.scale * norm(&m.mean())).min(self.cap))
    }

    fn gradient(&self, m: &EmpiricalMeasure) -> Result<Vec<f64>> {
        let mean = m.mean();
        let r = norm(&mean);
        let n = m.len() as f64;
        let mut out = vec![0.0; m.coords().len()];
        if r > 0.0 && self.scale * r < self.cap {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.scale * mean[i % m.dim()] / (r * n);
            }
        }
        Ok(out)
    }

    fn bound(&self) -> f64 {
        self.cap
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.scale.abs())
    }
}

/// `G(m) = min(d_2(m, Leb_[0,1]^d), cap)`.
///
/// In one dimension the distance is exact: the sorted points pair with the
/// consecutive intervals of length `1/N`. Otherwise the cube is replaced by
/// `samples_per_point * N` seeded uniform samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W2ToUniformCube {
    pub cap: f64,
    pub samples_per_point: usize,
    pub seed: u64,
}

impl W2ToUniformCube {
    fn reference(&self, dim: usize, n: usize) -> Result<SampledMeasure> {
        let mut rng = stream(self.seed, &[dim as u64, n as u64]);
        SampledMeasure::uniform_cube(dim, self.samples_per_point.max(1) * n, &mut rng)
    }

    /// Uncapped distance and its gradient.
    pub fn distance_and_gradient(&self, m: &EmpiricalMeasure) -> Result<(f64, Vec<f64>)> {
        let (n, d) = (m.len(), m.dim());
        let nf = n as f64;
        let mut grad = vec![0.0; n * d];
        if d == 1 {
            let order = m.rank_order();
            let mut sq = 0.0;
            for (r, &i) in order.iter().enumerate() {
                let diff = m.point(i)[0] - (r as f64 + 0.5) / nf;
                sq += diff * diff + 1.0 / (12.0 * nf * nf);
                grad[i] = diff;
            }
            let dist = (sq / nf).sqrt();
            grad.iter_mut().for_each(|g| *g /= nf * dist);
            return Ok((dist, grad));
        }
        let reference = self.reference(d, n)?;
        let samples = reference.samples();
        let (owner, mean_cost) = semidiscrete_plan(m, samples)?;
        let dist = mean_cost.max(0.0).sqrt();
        if dist > 0.0 {
            let scale = 1.0 / (samples.len() as f64 * dist);
            for (s, &i) in owner.iter().enumerate() {
                for k in 0..d {
                    grad[i * d + k] += scale * (m.point(i)[k] - samples.point(s)[k]);
                }
            }
        }
        Ok((dist, grad))
    }
}

impl TerminalCost for W2ToUniformCube {
    fn name(&self) -> &str {
        "w2-to-uniform-cube"
    }

    fn value(&self, m: &EmpiricalMeasure) -> Result<f64> {
        Ok(self.distance_and_gradient(m)?.0.min(self.cap))
    }

    fn gradient(&self, m: &EmpiricalMeasure) -> Result<Vec<f64>> {
        let (dist, grad) = self.distance_and_gradient(m)?;
        if dist >= self.cap {
            Ok(vec![0.0; grad.len()])
        } else {
            Ok(grad)
        }
    }

    fn bound(&self) -> f64 {
        self.cap
    }

    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

/// Built-in Hamiltonians by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HamiltonianConfig {
    Quadratic {
        #[serde(default)]
        coupling: f64,
    },
    Abs,
    NegAbs,
    NonconvexSin {
        a: f64,
        b: f64,
    },
    Zero,
}

impl HamiltonianConfig {
    pub fn build(&self) -> Arc<dyn Hamiltonian> {
        match *self {
            HamiltonianConfig::Quadratic { coupling } => Arc::new(Quadratic { coupling }),
            HamiltonianConfig::Abs => Arc::new(AbsP { sign: 1.0 }),
            HamiltonianConfig::NegAbs => Arc::new(AbsP { sign: -1.0 }),
            HamiltonianConfig::NonconvexSin { a, b } => Arc::new(NonconvexSin { a, b }),
            HamiltonianConfig::Zero => Arc::new(ZeroHamiltonian),
        }
    }
}

fn default_samples_per_point() -> usize {
    32
}

/// Built-in terminal costs by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TerminalConfig {
    Constant {
        value: f64,
    },
    MeanOfG {
        #[serde(flatten)]
        g: PointCost,
    },
    AbsMean {
        scale: f64,
        cap: f64,
    },
    W2ToUniformCube {
        cap: f64,
        #[serde(default = "default_samples_per_point")]
        samples_per_point: usize,
        #[serde(default)]
        seed: u64,
    },
}

impl TerminalConfig {
    pub fn build(&self) -> Result<TerminalSpec> {
        match *self {
            TerminalConfig::Constant { value } if value.is_finite() => {
                Ok(Arc::new(ConstantTerminal(value)))
            }
            TerminalConfig::MeanOfG { g } => Ok(Arc::new(MeanOfG(g))),
            TerminalConfig::AbsMean { scale, cap } if cap >= 0.0 => {
                Ok(Arc::new(AbsMean { scale, cap }))
            }
            TerminalConfig::W2ToUniformCube {
                cap,
                samples_per_point,
                seed,
            } if cap >= 0.0 => Ok(Arc::new(W2ToUniformCube {
                cap,
                samples_per_point,
                seed,
            })),
            other => Err(LabError::Config(format!("invalid terminal cost {other:?}"))),
        }
    }
}

/// A particle control problem with convex Hamiltonian.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub hamiltonian: HamiltonianSpec,
    pub terminal: TerminalSpec,
    pub horizon: f64,
    pub kappa: f64,
}

impl ControlProblem {
    pub fn new(
        hamiltonian: HamiltonianSpec,
        terminal: TerminalSpec,
        horizon: f64,
        kappa: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !(kappa >= 0.0) {
            return invalid(format!(
                "need T > 0 and kappa >= 0, got T={horizon}, kappa={kappa}"
            ));
        }
        Ok(Self {
            hamiltonian,
            terminal,
            horizon,
            kappa,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Fd,
    Transcription,
    HopfLax,
    Heat,
}

/// What a computed value is known to be relative to the true value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    Estimate,
    Upper,
    Lower,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueReport {
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    pub method: Method,
    pub bound: BoundKind,
    /// Optimizing configuration, when the method produces one.
    pub minimizer: Option<Vec<f64>>,
}
