use proptest::prelude::*;
use quantlab_core::quantizer::{
    balanced_quantize, merge_partitions, nested_partition, simultaneous_quantize, QuantizeOptions,
};
use quantlab_core::{rho, AtomSpace, RandomVariable};
use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_rv(k: usize, d: usize, rng: &mut ChaCha8Rng) -> RandomVariable {
    let vals = (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    RandomVariable::new(AtomSpace::new(k).unwrap(), d, vals).unwrap()
}

fn opts(seed: u64) -> QuantizeOptions {
    QuantizeOptions {
        restarts: 2,
        ..QuantizeOptions::default()
    }
    .with_seed(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn merge_identity(seed in any::<u64>(), nh in 1usize..5, m in 1usize..4, per in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = nh + m;
        let k = n * per;
        let x = random_rv(k, 2, &mut rng);
        let mut atoms: Vec<usize> = (0..k).collect();
        atoms.shuffle(&mut rng);
        let (gamma, hat) = atoms.split_at(m * per);
        let ph = balanced_quantize(&x.restrict(hat).unwrap(), nh, &opts(seed)).unwrap();
        let pg = balanced_quantize(&x.restrict(gamma).unwrap(), m, &opts(seed)).unwrap();
        let out = merge_partitions(&x, hat, gamma, &ph.partition, &pg.partition).unwrap();
        prop_assert!((out.rho_direct - out.rho_recombined).abs() < 1e-12);
    }

    #[test]
    fn nested_decomposition(seed in any::<u64>(), n1 in 1usize..4, n2 in 1usize..4, per in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = n1 * n2 * per;
        let x = random_rv(k, 2, &mut rng);
        let y = random_rv(k, 1, &mut rng);
        let out = nested_partition(&x, &y, n1, n2, &opts(seed)).unwrap();
        prop_assert!((out.rho_y - out.rho_y_decomposed).abs() < 1e-12);
        prop_assert!(out.rho_x <= out.rho_x_coarse + 1e-12);
        prop_assert!(out.partition.refines(&out.coarse));
    }

    #[test]
    fn scale_equivariance(seed in any::<u64>(), n in 1usize..6, per in 1usize..6, c in prop::sample::select(vec![2.0, -0.5, 0.25, -4.0])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_rv(n * per, 2, &mut rng);
        let base = balanced_quantize(&x, n, &opts(seed)).unwrap();
        let scaled = balanced_quantize(&x.scaled(c), n, &opts(seed)).unwrap();
        prop_assert!((scaled.rho_value - c.abs() * base.rho_value).abs() < 1e-12);
        let cross = rho(&x.scaled(c), &base.partition).unwrap();
        prop_assert!((cross - c.abs() * base.rho_value).abs() < 1e-12);
    }

    #[test]
    fn objective_nonincreasing(seed in any::<u64>(), n in 2usize..8, per in 2usize..6, cap in prop::sample::select(vec![4usize, 100_000])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_rv(n * per, 3, &mut rng);
        let q = balanced_quantize(&x, n, &QuantizeOptions { exact_cap: cap, ..opts(seed) }).unwrap();
        prop_assert!(q.trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        prop_assert!((rho(&x, &q.partition).unwrap() - q.rho_value).abs() < 1e-12);
    }

    #[test]
    fn simultaneous_partition_is_valid(seed in any::<u64>(), alpha in 0.2f64..0.8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_rv(120, 2, &mut rng);
        let y = random_rv(120, 2, &mut rng);
        let s = simultaneous_quantize(&x, &y, 12, alpha, &opts(seed)).unwrap();
        prop_assert_eq!(s.partition.len(), 12);
        prop_assert!(s.n1 * s.n2 + s.remainder == 12);
        prop_assert!((rho(&y, &s.partition).unwrap() - s.rho_y).abs() < 1e-12);
    }
}

#[test]
fn identical_variables_collapse_curves() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_rv(96, 2, &mut rng);
    let s = simultaneous_quantize(&x, &x, 16, 0.5, &opts(1)).unwrap();
    assert!((s.rho_x - s.rho_y).abs() < 1e-12);
}

#[test]
fn constant_y_is_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_rv(72, 2, &mut rng);
    let y = RandomVariable::constant(x.space(), &[0.3, -1.0]).unwrap();
    let out = nested_partition(&x, &y, 3, 4, &opts(2)).unwrap();
    assert!(out.rho_y.abs() < 1e-12);
}
