//! Seeded inputs shared by the benchmarks.

use quantlab_core::rng::stream;
use quantlab_core::{AtomSpace, EmpiricalMeasure, RandomVariable};
use rand::Rng;

/// `n` points uniform on `[-1, 1]^dim`.
pub fn cloud(n: usize, dim: usize, seed: u64) -> EmpiricalMeasure {
    let mut rng = stream(seed, &[n as u64, dim as u64]);
    let coords = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    EmpiricalMeasure::new(dim, coords).expect("finite coordinates")
}

/// Random variable on `k` atoms with uniform values on `[-1, 1]^dim`.
pub fn variable(k: usize, dim: usize, seed: u64) -> RandomVariable {
    let m = cloud(k, dim, seed);
    RandomVariable::new(AtomSpace::new(k).expect("k > 0"), dim, m.into_coords()).expect("shape")
}
