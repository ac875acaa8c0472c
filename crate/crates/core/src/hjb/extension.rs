use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::measure::{wasserstein_uniform, EmpiricalMeasure, Exponent};
use crate::quantizer::{quantize_measure, QuantizeOptions};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendConfig {
    pub restarts: usize,
    /// Pattern-search sweeps per restart.
    pub max_iters: usize,
    pub initial_step: f64,
    pub min_step: f64,
    pub seed: u64,
}

impl Default for ExtendConfig {
    fn default() -> Self {
        Self {
            restarts: 3,
            max_iters: 200,
            initial_step: 0.1,
            min_step: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtensionReport {
    pub value: f64,
    /// Configuration attaining `value`.
    pub x: EmpiricalMeasure,
    pub converged: bool,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Upper bound on `inf_x { V^N(t,x) + 2 C0 d_1(m^N_x, m) }`.
///
/// The search starts from balanced `N`-point quantizers of `m` (seeded
/// differently per restart, the later ones perturbed) and improves each by a
/// coordinate pattern search. When `m` is itself an `N`-point measure the
/// first start is `m`, so the result equals `V^N(t, m)` whenever `C0`
/// dominates the Lipschitz constant of `V^N`.
pub fn lipschitz_extend(
    vn: impl Fn(&EmpiricalMeasure) -> Result<f64>,
    m: &EmpiricalMeasure,
    n: usize,
    c0: f64,
    cfg: &ExtendConfig,
) -> Result<ExtensionReport> {
    if n == 0 || !(c0 >= 0.0) {
        return invalid(format!("need N >= 1 and C0 >= 0, got N={n}, C0={c0}"));
    }
    let objective = |x: &EmpiricalMeasure| -> Result<f64> {
        Ok(vn(x)? + 2.0 * c0 * wasserstein_uniform(x, m, Exponent::One)?)
    };
    let reps = n / gcd(n, m.len());
    let lifted = m.replicate(reps);
    let mut best: Option<ExtensionReport> = None;
    for r in 0..cfg.restarts.max(1) {
        let opts = QuantizeOptions::default().with_seed(cfg.seed.wrapping_add(r as u64));
        let atoms = if m.dim() == 1 {
            Some(lifted.len())
        } else {
            None
        };
        let (_, q) = quantize_measure(&lifted, n, atoms, &opts)?;
        let mut coords = q.centroids;
        if r >= 2 {
            let mut rng = stream(cfg.seed, &[0xE0, r as u64]);
            for c in coords.iter_mut() {
                *c += cfg.initial_step * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut x = EmpiricalMeasure::new(m.dim(), coords)?;
        let mut value = objective(&x)?;
        let mut step = cfg.initial_step;
        let mut sweeps = 0;
        while step >= cfg.min_step && sweeps < cfg.max_iters {
            sweeps += 1;
            let mut improved = false;
            for idx in 0..x.coords().len() {
                for dir in [1.0, -1.0] {
                    let mut c = x.coords().to_vec();
                    c[idx] += dir * step;
                    let trial = EmpiricalMeasure::new(m.dim(), c)?;
                    let v = objective(&trial)?;
                    if v < value {
                        x = trial;
                        value = v;
                        improved = true;
                        break;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        let run = ExtensionReport {
            value,
            x,
            converged: step < cfg.min_step,
        };
        if best.as_ref().is_none_or(|b| run.value < b.value) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::heat::heat_value;
    use crate::hjb::problem::{MeanOfG, PointCost, TerminalCost};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_on_empirical_measures() {
        let g = MeanOfG(PointCost::CappedAbs { cap: 1.0 });
        let vn = |x: &EmpiricalMeasure| g.value(x);
        for pts in [[0.1, 0.5, 0.7], [-0.4, 0.0, 2.0], [0.3, 0.3, 0.9]] {
            let m = EmpiricalMeasure::from_1d(&pts).unwrap();
            let r = lipschitz_extend(vn, &m, 3, 1.0, &ExtendConfig::default()).unwrap();
            assert!((r.value - g.value(&m).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn far_atom_with_zero_value() {
        let m = EmpiricalMeasure::from_1d(&[40.0]).unwrap();
        let r = lipschitz_extend(|_| Ok(0.0), &m, 4, 2.0, &ExtendConfig::default()).unwrap();
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn extension_is_lipschitz() {
        let g = MeanOfG(PointCost::Bump {
            amp: 1.0,
            width: 0.8,
        });
        let vn = |x: &EmpiricalMeasure| heat_value(&g, x, 0.5, 1.0, 0.2, 50, 7);
        let c0 = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cfg = ExtendConfig {
            restarts: 2,
            ..ExtendConfig::default()
        };
        for _ in 0..4 {
            let a: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (ma, mb) = (
                EmpiricalMeasure::from_1d(&a).unwrap(),
                EmpiricalMeasure::from_1d(&b).unwrap(),
            );
            let va = lipschitz_extend(vn, &ma, 2, c0, &cfg).unwrap().value;
            let vb = lipschitz_extend(vn, &mb, 2, c0, &cfg).unwrap().value;
            let d1 = wasserstein_uniform(&ma, &mb, Exponent::One).unwrap();
            // the search returns upper bounds, so allow its optimization slack
            assert!((va - vb).abs() <= 2.0 * c0 * d1 + 1e-3, "{va} {vb} {d1}");
        }
    }
}
