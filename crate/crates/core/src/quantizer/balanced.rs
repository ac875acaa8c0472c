use rand::Rng;
use rayon::prelude::*;

use crate::assignment::{greedy_balanced, solve_balanced};
use crate::error::{invalid, Result};
use crate::measure::{squared_distance, EmpiricalMeasure};
use crate::prob_space::{block_means, quantile_rv, rho, AtomSpace, Partition, RandomVariable};
use crate::rng::stream;

/// Knobs for [`balanced_quantize`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizeOptions {
    pub restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Largest atom count solved with the exact assignment kernel; beyond it
    /// the greedy + pairwise-swap heuristic is used.
    pub exact_cap: usize,
    pub swap_passes: usize,
}

impl Default for QuantizeOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            max_iters: 100,
            seed: 0,
            exact_cap: 8192,
            swap_passes: 8,
        }
    }
}

impl QuantizeOptions {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }
}

/// Best partition found by [`balanced_quantize`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizeResult {
    pub partition: Partition,
    pub rho_value: f64,
    /// Assignment steps taken by the winning restart.
    pub iterations: usize,
    pub restarts_used: usize,
    /// False when the iteration budget ran out before a fixed point.
    pub converged: bool,
    /// Block means, `N x d` row-major.
    pub centroids: Vec<f64>,
    /// `rho` after every iteration of the winning restart.
    pub trace: Vec<f64>,
}

impl QuantizeResult {
    /// The quantizer as an `N`-point empirical measure.
    pub fn centroid_measure(&self, dim: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::new(dim, self.centroids.clone()).expect("finite block means")
    }
}

struct Run {
    labels: Vec<usize>,
    rho: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn seed_centroids<R: Rng>(x: &RandomVariable, n: usize, rng: &mut R) -> Vec<f64> {
    // k-means++ seeding
    let (k, d) = (x.space().atoms(), x.dim());
    let mut centroids = Vec::with_capacity(n * d);
    let first = rng.random_range(0..k);
    centroids.extend_from_slice(x.value(first));
    let mut d2: Vec<f64> = (0..k)
        .map(|a| squared_distance(x.value(a), x.value(first)))
        .collect();
    for _ in 1..n {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = k - 1;
            for (a, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = a;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..k)
        };
        let c = x.value(pick).to_vec();
        for (a, w) in d2.iter_mut().enumerate() {
            *w = w.min(squared_distance(x.value(a), &c));
        }
        centroids.extend(c);
    }
    centroids
}

fn cost_matrix(x: &RandomVariable, centroids: &[f64], n: usize) -> Vec<f64> {
    let d = x.dim();
    let k = x.space().atoms();
    let mut cost = Vec::with_capacity(k * n);
    for a in 0..k {
        let v = x.value(a);
        for c in centroids.chunks_exact(d) {
            cost.push(squared_distance(v, c));
        }
    }
    cost
}

fn labelled_cost(cost: &[f64], n: usize, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(a, &l)| cost[a * n + l])
        .sum()
}

fn lloyd<R: Rng>(x: &RandomVariable, n: usize, rng: &mut R, opts: &QuantizeOptions) -> Result<Run> {
    let k = x.space().atoms();
    let cap = k / n;
    let exact = k <= opts.exact_cap;
    let mut centroids = seed_centroids(x, n, rng);
    let mut labels: Option<Vec<usize>> = None;
    let mut current = f64::INFINITY;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        iterations += 1;
        let cost = cost_matrix(x, &centroids, n);
        let assignment = if exact {
            solve_balanced(&cost, k, n, cap)?
        } else {
            greedy_balanced(&cost, k, n, cap, opts.swap_passes)?
        };
        if let Some(old) = &labels {
            // the heuristic may fail to beat the incumbent labels
            if assignment.owner == *old || assignment.total_cost > labelled_cost(&cost, n, old) {
                converged = true;
                break;
            }
        }
        let partition = Partition::from_labels(x.space(), &assignment.owner, n)?;
        let value = rho(x, &partition)?;
        debug_assert!(
            !exact || value <= current * (1.0 + 1e-12),
            "balanced Lloyd objective increased: {current} -> {value}"
        );
        if value > current * (1.0 + 1e-12) {
            converged = true;
            break;
        }
        let improved = value < current * (1.0 - 1e-13);
        centroids = block_means(x, &partition)?;
        labels = Some(assignment.owner);
        current = value;
        trace.push(value);
        if !improved {
            converged = true;
            break;
        }
    }
    if !converged && iterations >= opts.max_iters {
        converged = false;
    }
    Ok(Run {
        labels: labels.expect("at least one iteration"),
        rho: current,
        iterations,
        converged,
        trace,
    })
}

/// Searches for an equal-mass partition of the atoms into `n` blocks that
/// minimizes `rho(X, Pi)`.
///
/// Each restart seeds centroids with k-means++ and alternates an exact
/// equal-size assignment of atoms to centroids with centroid = block mean;
/// the objective never increases. Restarts run in parallel and the best one
/// wins, ties going to the lower restart index.
pub fn balanced_quantize(
    x: &RandomVariable,
    n: usize,
    opts: &QuantizeOptions,
) -> Result<QuantizeResult> {
    let k = x.space().atoms();
    if n == 0 || !k.is_multiple_of(n) {
        return invalid(format!("{k} atoms are not divisible into {n} blocks"));
    }
    if opts.max_iters == 0 {
        return invalid("max_iters must be positive");
    }
    let restarts = opts.restarts.max(1);
    let runs: Vec<Result<Run>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(opts.seed, &[n as u64, r as u64]);
            lloyd(x, n, &mut rng, opts)
        })
        .collect();
    let mut best: Option<Run> = None;
    for run in runs {
        let run = run?;
        if best.as_ref().is_none_or(|b| run.rho < b.rho) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    let partition = Partition::from_labels(x.space(), &best.labels, n)?;
    let rho_value = rho(x, &partition)?;
    let centroids = block_means(x, &partition)?;
    Ok(QuantizeResult {
        partition,
        rho_value,
        iterations: best.iterations,
        restarts_used: restarts,
        converged: best.converged,
        centroids,
        trace: best.trace,
    })
}

/// Random variable whose law is `m`: the monotone rearrangement on `atoms`
/// atoms in one dimension, one atom per point otherwise.
pub fn lift_measure(m: &EmpiricalMeasure, atoms: Option<usize>) -> Result<RandomVariable> {
    if m.dim() == 1 {
        quantile_rv(m, AtomSpace::new(atoms.unwrap_or(m.len()))?)
    } else {
        match atoms {
            Some(k) if k != m.len() => invalid(format!(
                "in dimension {} the atom count must equal the sample count {}",
                m.dim(),
                m.len()
            )),
            _ => Ok(RandomVariable::from_measure(m)),
        }
    }
}

/// Balanced quantization of a measure through its lift.
pub fn quantize_measure(
    m: &EmpiricalMeasure,
    n: usize,
    atoms: Option<usize>,
    opts: &QuantizeOptions,
) -> Result<(RandomVariable, QuantizeResult)> {
    let x = lift_measure(m, atoms)?;
    let q = balanced_quantize(&x, n, opts)?;
    Ok((x, q))
}

/// Upper estimate of the constrained quantization error `e_N(m)`.
pub fn e_n_estimate(
    m: &EmpiricalMeasure,
    n: usize,
    atoms: Option<usize>,
    opts: &QuantizeOptions,
) -> Result<f64> {
    Ok(quantize_measure(m, n, atoms, opts)?.1.rho_value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::SampledMeasure;
    use crate::prob_space::regular_partition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_block_constant_variable() {
        let space = AtomSpace::new(12).unwrap();
        let levels = [3.0, -1.0, 7.0, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut vals: Vec<f64> = levels.iter().flat_map(|&l| [l; 3]).collect();
        use rand::seq::SliceRandom;
        vals.shuffle(&mut rng);
        let x = RandomVariable::new(space, 1, vals).unwrap();
        let q = balanced_quantize(&x, 4, &QuantizeOptions::default()).unwrap();
        assert!(q.rho_value < 1e-12);
    }

    #[test]
    fn identity_on_unit_interval_is_regular() {
        let space = AtomSpace::new(1024).unwrap();
        let x = RandomVariable::from_fn(space, 1, |w| vec![w]).unwrap();
        for n in [2, 8, 32] {
            let q = balanced_quantize(&x, n, &QuantizeOptions::default()).unwrap();
            let reg = rho(&x, &regular_partition(space, n).unwrap()).unwrap();
            assert!(q.rho_value <= reg * (1.0 + 1e-9));
            assert!(q.rho_value >= reg * (1.0 - 1e-9));
            let analytic = 1.0 / (2.0 * 3f64.sqrt() * n as f64);
            assert!(q.rho_value <= analytic * (1.0 + 1e-9));
        }
    }

    #[test]
    fn cube_into_eight_blocks() {
        let grid = SampledMeasure::cube_grid(3, 8).unwrap();
        let x = RandomVariable::from_measure(grid.samples());
        let q = balanced_quantize(&x, 8, &QuantizeOptions::default()).unwrap();
        // subcube partition of an 8^3 grid: per-axis variance (1/8)^2 * 15 / 12
        let subcube = (3.0 * 15.0 / 12.0 / 64.0f64).sqrt();
        assert!(q.rho_value <= subcube * (1.0 + 1e-9), "{}", q.rho_value);
    }

    #[test]
    fn objective_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let vals: Vec<f64> = (0..600).map(|_| rng.random::<f64>()).collect();
        let x = RandomVariable::new(AtomSpace::new(200).unwrap(), 3, vals).unwrap();
        let q = balanced_quantize(&x, 10, &QuantizeOptions::default()).unwrap();
        assert!(q.trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!((q.rho_value - q.trace.last().copied().unwrap()).abs() < 1e-12);
        assert!((rho(&x, &q.partition).unwrap() - q.rho_value).abs() < 1e-12);
    }

    #[test]
    fn heuristic_path_is_feasible_and_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let vals: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
        let x = RandomVariable::new(AtomSpace::new(200).unwrap(), 2, vals).unwrap();
        let opts = QuantizeOptions {
            exact_cap: 10,
            ..QuantizeOptions::default()
        };
        let heur = balanced_quantize(&x, 8, &opts).unwrap();
        let exact = balanced_quantize(&x, 8, &QuantizeOptions::default()).unwrap();
        assert!(heur.trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(heur.rho_value < 1.2 * exact.rho_value);
    }

    #[test]
    fn scale_equivariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..240).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = RandomVariable::new(AtomSpace::new(120).unwrap(), 2, vals).unwrap();
        let opts = QuantizeOptions::default().with_seed(42);
        let base = balanced_quantize(&x, 6, &opts).unwrap();
        for c in [2.0, -0.5, 4.0] {
            let scaled = balanced_quantize(&x.scaled(c), 6, &opts).unwrap();
            assert!((scaled.rho_value - c.abs() * base.rho_value).abs() < 1e-12);
            assert_eq!(scaled.partition, base.partition);
        }
    }

    #[test]
    fn divisibility_and_budget() {
        let x = RandomVariable::from_fn(AtomSpace::new(10).unwrap(), 1, |w| vec![w]).unwrap();
        assert!(balanced_quantize(&x, 3, &QuantizeOptions::default()).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let vals: Vec<f64> = (0..400).map(|_| rng.random::<f64>()).collect();
        let y = RandomVariable::new(AtomSpace::new(200).unwrap(), 2, vals).unwrap();
        let opts = QuantizeOptions {
            max_iters: 1,
            restarts: 1,
            ..QuantizeOptions::default()
        };
        let q = balanced_quantize(&y, 10, &opts).unwrap();
        assert!(!q.converged);
        assert_eq!(q.iterations, 1);
    }

    #[test]
    fn e_n_examples() {
        let dirac = EmpiricalMeasure::from_1d(&[0.3; 4]).unwrap();
        for n in [1, 2, 4] {
            assert_eq!(
                e_n_estimate(&dirac, n, None, &QuantizeOptions::default()).unwrap(),
                0.0
            );
        }
        let leb = SampledMeasure::cube_grid(1, 2048).unwrap();
        let e1 = e_n_estimate(leb.samples(), 1, None, &QuantizeOptions::default()).unwrap();
        assert!((e1 - (1.0f64 / 12.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn more_restarts_never_hurt() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = SampledMeasure::uniform_cube(2, 240, &mut rng).unwrap();
        let mut prev = f64::INFINITY;
        for r in 1..=4 {
            let opts = QuantizeOptions::default().with_restarts(r).with_seed(4);
            let e = e_n_estimate(m.samples(), 12, None, &opts).unwrap();
            assert!(e <= prev);
            prev = e;
        }
    }
}
