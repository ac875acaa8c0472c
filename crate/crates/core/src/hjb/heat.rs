use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::measure::{shift, wasserstein_uniform, EmpiricalMeasure, Exponent};
use crate::rng::stream;

use super::problem::TerminalCost;

fn shifts(dim: usize, t: f64, horizon: f64, kappa: f64, samples: usize, seed: u64) -> Vec<f64> {
    let scale = (2.0 * kappa * (horizon - t)).sqrt();
    let mut rng = stream(seed, &[0xC0, dim as u64]);
    (0..samples * dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn check(t: f64, horizon: f64, kappa: f64, samples: usize) -> Result<()> {
    if !(kappa >= 0.0) {
        return invalid(format!("kappa must be nonnegative, got {kappa}"));
    }
    if !(t <= horizon) {
        return invalid(format!("t = {t} after the horizon {horizon}"));
    }
    if samples == 0 {
        return invalid("need at least one Monte-Carlo sample");
    }
    Ok(())
}

/// `E[G((Id + z)_# m)]` with `z ~ N(0, 2 kappa (T - t) I)`, averaged over
/// `samples` seeded draws.
pub fn heat_value(
    g: &dyn TerminalCost,
    m: &EmpiricalMeasure,
    t: f64,
    horizon: f64,
    kappa: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check(t, horizon, kappa, samples)?;
    if kappa == 0.0 || t == horizon {
        return g.value(m);
    }
    let z = shifts(m.dim(), t, horizon, kappa, samples, seed);
    let mut total = 0.0;
    for zs in z.chunks_exact(m.dim()) {
        total += g.value(&shift(m, zs)?)?;
    }
    Ok(total / samples as f64)
}

/// Particle form of [`heat_value`]: `E[G(m^N_{x + z})]` where every particle
/// `x^i` (rows of `xs`) receives the same shift.
#[allow(clippy::too_many_arguments)]
pub fn heat_value_particles(
    g: &dyn TerminalCost,
    xs: &[f64],
    dim: usize,
    t: f64,
    horizon: f64,
    kappa: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check(t, horizon, kappa, samples)?;
    if dim == 0 || xs.is_empty() || !xs.len().is_multiple_of(dim) {
        return invalid("particle array does not match the dimension");
    }
    if kappa == 0.0 || t == horizon {
        return g.value(&EmpiricalMeasure::new(dim, xs.to_vec())?);
    }
    let z = shifts(dim, t, horizon, kappa, samples, seed);
    let mut total = 0.0;
    let mut moved = vec![0.0; xs.len()];
    for zs in z.chunks_exact(dim) {
        for (i, (o, x)) in moved.iter_mut().zip(xs).enumerate() {
            *o = x + zs[i % dim];
        }
        total += g.value(&EmpiricalMeasure::new(dim, moved.clone())?)?;
    }
    Ok(total / samples as f64)
}

/// Right-hand side of `|V^N(t,x) - G(m^N_x)| <= 2C(T-t) + 2 Lip(G) sqrt(2 kappa) sqrt(T-t)`.
pub fn heat_bound(c: f64, lip: f64, kappa: f64, t: f64, horizon: f64) -> f64 {
    let tau = (horizon - t).max(0.0);
    2.0 * c * tau + 2.0 * lip * (2.0 * kappa).sqrt() * tau.sqrt()
}

/// Outcome of [`small_time_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct SmallTimeReport {
    /// `U(t,mu) - V^N(t,x) - d_2(mu, m^N_x)^2 / (2 eps)` per trial pair.
    pub lhs: Vec<f64>,
    pub max_lhs: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Evaluates `U(t,mu) - V^N(t,x) - d_2^2(mu, m^N_x)/(2 eps)` on every trial
/// pair `(mu, m^N_x)` and compares the maximum with
/// `C (T - t) + C_G^2 eps / 2`.
#[allow(clippy::too_many_arguments)]
pub fn small_time_check(
    u: impl Fn(&EmpiricalMeasure) -> Result<f64>,
    vn: impl Fn(&EmpiricalMeasure) -> Result<f64>,
    pairs: &[(EmpiricalMeasure, EmpiricalMeasure)],
    t: f64,
    horizon: f64,
    eps: f64,
    c: f64,
    c_g: f64,
) -> Result<SmallTimeReport> {
    if !(eps > 0.0) {
        return invalid(format!("eps must be positive, got {eps}"));
    }
    let mut lhs = Vec::with_capacity(pairs.len());
    for (mu, x) in pairs {
        let d2 = wasserstein_uniform(mu, x, Exponent::Two)?;
        let penalty = if eps.is_infinite() {
            0.0
        } else {
            d2 * d2 / (2.0 * eps)
        };
        lhs.push(u(mu)? - vn(x)? - penalty);
    }
    let max_lhs = lhs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bound = c * (horizon - t) + c_g * c_g * eps / 2.0;
    Ok(SmallTimeReport {
        holds: max_lhs <= bound,
        lhs,
        max_lhs,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjb::fd::{solve_fd, FdGrid};
    use crate::hjb::problem::{
        ConstantTerminal, HamiltonianSpec, MeanOfG, PointCost, ZeroHamiltonian,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn capped() -> MeanOfG {
        MeanOfG(PointCost::CappedAbs { cap: 1.0 })
    }

    #[test]
    fn trivial_cases() {
        let m = EmpiricalMeasure::from_1d(&[0.2, -0.7]).unwrap();
        let c = ConstantTerminal(0.4);
        assert!((heat_value(&c, &m, 0.1, 1.0, 0.7, 50, 1).unwrap() - 0.4).abs() < 1e-15);
        let g = capped();
        assert_eq!(
            heat_value(&g, &m, 0.1, 1.0, 0.0, 50, 1).unwrap(),
            g.value(&m).unwrap()
        );
        assert_eq!(
            heat_value(&g, &m, 1.0, 1.0, 0.5, 50, 1).unwrap(),
            g.value(&m).unwrap()
        );
        assert!(heat_value(&g, &m, 0.1, 1.0, -1.0, 50, 1).is_err());
    }

    #[test]
    fn exact_projection_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = MeanOfG(PointCost::Bump {
            amp: 1.0,
            width: 0.6,
        });
        for trial in 0..50 {
            let d = 1 + trial % 3;
            let n = 1 + trial % 5;
            let xs: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let t = rng.random_range(0.0..1.0);
            let kappa = rng.random_range(0.0..2.0);
            let m = EmpiricalMeasure::new(d, xs.clone()).unwrap();
            let a = heat_value(&g, &m, t, 1.0, kappa, 64, trial as u64).unwrap();
            let b = heat_value_particles(&g, &xs, d, t, 1.0, kappa, 64, trial as u64).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn gaussian_shift_bound_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = capped();
        for _ in 0..30 {
            let xs: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let m = EmpiricalMeasure::from_1d(&xs).unwrap();
            let t = rng.random_range(0.0..1.0);
            let kappa = rng.random_range(0.0..1.0);
            let v = heat_value(&g, &m, t, 1.0, kappa, 200, 3).unwrap();
            let bound = heat_bound(0.0, 1.0, kappa, t, 1.0);
            assert!((v - g.value(&m).unwrap()).abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn agrees_with_finite_differences() {
        let g = MeanOfG(PointCost::Bump {
            amp: 1.0,
            width: 0.5,
        });
        let h = HamiltonianSpec::new(Arc::new(ZeroHamiltonian), 1.0).unwrap();
        let kappa = 0.1;
        let table = solve_fd(&h, &g, 1, 1, kappa, &FdGrid::new(4.0, 0.02, 0.001, 1.0)).unwrap();
        for &x in &[0.0, 0.3, -0.8, 1.5] {
            let m = EmpiricalMeasure::from_1d(&[x]).unwrap();
            let mc = heat_value(&g, &m, 0.0, 1.0, kappa, 40_000, 11).unwrap();
            let fd = table.value(0.0, &[x]).unwrap();
            // MC standard error is below 2e-3 here
            assert!((mc - fd).abs() < 8e-3, "x={x}: {mc} vs {fd}");
        }
    }

    #[test]
    fn small_time_trivial_and_heat_cases() {
        let g = capped();
        let x = EmpiricalMeasure::from_1d(&[0.1, 0.5, -0.3]).unwrap();
        let r = small_time_check(
            |m| g.value(m),
            |m| g.value(m),
            &[(x.clone(), x.clone())],
            1.0,
            1.0,
            0.5,
            0.0,
            1.0,
        )
        .unwrap();
        assert_eq!(r.max_lhs, 0.0);
        assert!(r.holds);

        let mu = EmpiricalMeasure::from_1d(&[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]).unwrap();
        let pairs = vec![(mu.clone(), x.clone())];
        for &t in &[0.5, 0.9] {
            let r = small_time_check(
                |m| heat_value(&g, m, t, 1.0, 0.3, 500, 2),
                |m| heat_value(&g, m, t, 1.0, 0.3, 500, 2),
                &pairs,
                t,
                1.0,
                0.1,
                0.0,
                1.0,
            )
            .unwrap();
            assert!(r.holds);
        }
        let inf = small_time_check(
            |m| g.value(m),
            |m| g.value(m),
            &pairs,
            1.0,
            1.0,
            f64::INFINITY,
            0.0,
            1.0,
        )
        .unwrap();
        assert_eq!(inf.max_lhs, g.value(&mu).unwrap() - g.value(&x).unwrap());
    }
}
