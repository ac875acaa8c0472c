use std::sync::Arc;

use proptest::prelude::*;
use quantlab_core::hjb::{
    heat_value, heat_value_particles, solve_fd, solve_transcription, vn_example_value,
    ControlProblem, ExampleConfig, FdGrid, HamiltonianSpec, MeanOfG, NonconvexSin, PointCost,
    Quadratic, TerminalSpec, TranscriptionConfig, W2ToUniformCube,
};
use quantlab_core::{EmpiricalMeasure, SampledMeasure};

fn permuted(xs: &[f64], d: usize, seed: u64) -> Vec<f64> {
    use rand::{seq::SliceRandom, SeedableRng};
    let mut idx: Vec<usize> = (0..xs.len() / d).collect();
    idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    idx.iter()
        .flat_map(|&i| xs[i * d..(i + 1) * d].to_vec())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn heat_symmetric_and_projected(
        xs in prop::collection::vec(-2.0f64..2.0, 2..12),
        t in 0.0f64..1.0,
        kappa in 0.0f64..1.5,
        seed in any::<u64>(),
    ) {
        let g = MeanOfG(PointCost::Bump { amp: 1.0, width: 0.5 });
        let m = EmpiricalMeasure::from_1d(&xs).unwrap();
        let a = heat_value(&g, &m, t, 1.0, kappa, 32, seed).unwrap();
        let b = heat_value_particles(&g, &xs, 1, t, 1.0, kappa, 32, seed).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        let p = heat_value_particles(&g, &permuted(&xs, 1, seed), 1, t, 1.0, kappa, 32, seed).unwrap();
        prop_assert!((a - p).abs() < 1e-14);
    }

    #[test]
    fn transcription_symmetric(xs in prop::collection::vec(0.0f64..1.5, 2..6), seed in any::<u64>()) {
        let h = HamiltonianSpec::new(Arc::new(Quadratic { coupling: 0.3 }), 10.0).unwrap();
        let g: TerminalSpec = Arc::new(W2ToUniformCube { cap: 2.0, samples_per_point: 32, seed: 0 });
        let p = ControlProblem::new(h, g, 1.0, 0.0).unwrap();
        let cfg = TranscriptionConfig { steps: 4, ..TranscriptionConfig::default() };
        let a = solve_transcription(&p, 0.0, &EmpiricalMeasure::from_1d(&xs).unwrap(), &cfg).unwrap();
        let b = solve_transcription(&p, 0.0, &EmpiricalMeasure::from_1d(&permuted(&xs, 1, seed)).unwrap(), &cfg)
            .unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-8);
    }

    #[test]
    fn example_value_symmetric(xs in prop::collection::vec(-0.5f64..1.5, 4), seed in any::<u64>()) {
        let leb = SampledMeasure::cube_grid(1, 64).unwrap();
        let cfg = ExampleConfig { restarts: 2, ..ExampleConfig::default() };
        let a = vn_example_value(&EmpiricalMeasure::from_1d(&xs).unwrap(), &leb, &cfg).unwrap();
        let b = vn_example_value(&EmpiricalMeasure::from_1d(&permuted(&xs, 1, seed)).unwrap(), &leb, &cfg).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-9);
    }
}

#[test]
fn fd_comparison_principle_on_sampled_pairs() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
    let h = HamiltonianSpec::new(Arc::new(NonconvexSin { a: 0.4, b: 1.5 }), 3.0).unwrap();
    let grid = FdGrid::new(1.5, 0.1, 0.005, 0.4);
    for _ in 0..6 {
        let c1 = rng.random_range(0.1..1.0);
        let c2 = c1 + rng.random_range(0.0..0.5);
        let a = solve_fd(
            &h,
            &MeanOfG(PointCost::CappedAbs { cap: c1 }),
            2,
            1,
            0.05,
            &grid,
        )
        .unwrap();
        let b = solve_fd(
            &h,
            &MeanOfG(PointCost::CappedAbs { cap: c2 }),
            2,
            1,
            0.05,
            &grid,
        )
        .unwrap();
        for s in 0..a.times().len() {
            assert!(a.slice(s).iter().zip(b.slice(s)).all(|(u, v)| u <= v));
        }
    }
}
