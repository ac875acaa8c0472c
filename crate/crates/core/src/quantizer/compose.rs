use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::balanced::{balanced_quantize, QuantizeOptions, QuantizeResult};
use crate::error::{invalid, Result};
use crate::prob_space::{rho, Partition, RandomVariable};
use crate::rng::{derive_seed, stream};

/// Partition of `Omega_hat ∪ Gamma` glued from partitions of each piece,
/// with the error computed directly and through the mass-weighted
/// recombination of the two pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeOutcome {
    pub partition: Partition,
    pub rho_direct: f64,
    pub rho_hat: f64,
    pub rho_rest: f64,
    pub rho_recombined: f64,
}

/// Glues `hat` (a partition of the subspace on `omega_hat`) and `rest` (a
/// partition of the subspace on `gamma`) into one partition of the whole
/// space. Both pieces must carry the block mass `1/N` with
/// `N = hat.len() + rest.len()`.
pub fn merge_partitions(
    x: &RandomVariable,
    omega_hat: &[usize],
    gamma: &[usize],
    hat: &Partition,
    rest: &Partition,
) -> Result<MergeOutcome> {
    let k = x.space().atoms();
    let mut seen = vec![false; k];
    for &a in omega_hat.iter().chain(gamma) {
        if a >= k {
            return invalid(format!("atom {a} out of range"));
        }
        if std::mem::replace(&mut seen[a], true) {
            return invalid(format!("atom {a} lies in both pieces"));
        }
    }
    if seen.iter().any(|s| !s) {
        return invalid("the two pieces do not cover the space");
    }
    if hat.space().atoms() != omega_hat.len() || rest.space().atoms() != gamma.len() {
        return invalid("piece partitions do not match the piece sizes");
    }
    let n = hat.len() + rest.len();
    if !k.is_multiple_of(n) || hat.block_size() != k / n || rest.block_size() != k / n {
        return invalid(format!(
            "pieces of {} and {} atoms with {} and {} blocks do not carry mass 1/{n} per block",
            omega_hat.len(),
            gamma.len(),
            hat.len(),
            rest.len()
        ));
    }
    let lift = |p: &Partition, index: &[usize]| -> Vec<Vec<usize>> {
        p.blocks()
            .iter()
            .map(|b| b.iter().map(|&a| index[a]).collect())
            .collect()
    };
    let mut blocks = lift(hat, omega_hat);
    blocks.extend(lift(rest, gamma));
    let partition = Partition::new(x.space(), blocks)?;

    let rho_direct = rho(x, &partition)?;
    let rho_hat = rho(&x.restrict(omega_hat)?, hat)?;
    let rho_rest = rho(&x.restrict(gamma)?, rest)?;
    let (nh, m) = (hat.len() as f64, rest.len() as f64);
    let rho_recombined =
        (nh / n as f64 * rho_hat * rho_hat + m / n as f64 * rho_rest * rho_rest).sqrt();
    Ok(MergeOutcome {
        partition,
        rho_direct,
        rho_hat,
        rho_rest,
        rho_recombined,
    })
}

/// Product partition: `X` quantized into `n1` blocks, then `Y` quantized into
/// `n2` blocks inside each of them.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedOutcome {
    pub partition: Partition,
    pub coarse: Partition,
    pub rho_x: f64,
    pub rho_x_coarse: f64,
    pub rho_y: f64,
    /// `rho(Y|A_i, Pi_i)` for each coarse block.
    pub rho_y_blocks: Vec<f64>,
    /// `sqrt(mean_i rho_y_blocks[i]^2)`; equals `rho_y`.
    pub rho_y_decomposed: f64,
}

pub fn nested_partition(
    x: &RandomVariable,
    y: &RandomVariable,
    n1: usize,
    n2: usize,
    opts: &QuantizeOptions,
) -> Result<NestedOutcome> {
    if x.space() != y.space() {
        return invalid("X and Y live on different spaces");
    }
    let k = x.space().atoms();
    let n = n1 * n2;
    if n == 0 || !k.is_multiple_of(n) {
        return invalid(format!(
            "{k} atoms are not divisible into {n1} x {n2} blocks"
        ));
    }
    let coarse_opts = opts.clone().with_seed(derive_seed(opts.seed, &[1]));
    let coarse: QuantizeResult = balanced_quantize(x, n1, &coarse_opts)?;
    let inner: Vec<Result<QuantizeResult>> = coarse
        .partition
        .blocks()
        .par_iter()
        .enumerate()
        .map(|(i, block)| {
            let sub_opts = opts
                .clone()
                .with_seed(derive_seed(opts.seed, &[2, i as u64]));
            balanced_quantize(&y.restrict(block)?, n2, &sub_opts)
        })
        .collect();
    let mut blocks = Vec::with_capacity(n);
    let mut rho_y_blocks = Vec::with_capacity(n1);
    for (block, sub) in coarse.partition.blocks().iter().zip(inner) {
        let sub = sub?;
        rho_y_blocks.push(sub.rho_value);
        for b in sub.partition.blocks() {
            blocks.push(b.iter().map(|&a| block[a]).collect());
        }
    }
    let partition = Partition::new(x.space(), blocks)?;
    let rho_y_decomposed = (rho_y_blocks.iter().map(|r| r * r).sum::<f64>() / n1 as f64).sqrt();
    Ok(NestedOutcome {
        rho_x: rho(x, &partition)?,
        rho_x_coarse: coarse.rho_value,
        rho_y: rho(y, &partition)?,
        partition,
        coarse: coarse.partition,
        rho_y_blocks,
        rho_y_decomposed,
    })
}

/// `floor(n^e)` robust to `n^e` landing a hair below an integer.
pub fn floor_pow(n: usize, e: f64) -> usize {
    let v = (n as f64).powf(e);
    (v + 1e-12 * v.max(1.0)).floor() as usize
}

/// One partition that quantizes `X` and `Y` at once.
#[derive(Debug, Clone, PartialEq)]
pub struct SimultaneousOutcome {
    pub partition: Partition,
    pub n1: usize,
    pub n2: usize,
    /// Blocks left over after the `n1 * n2` product blocks.
    pub remainder: usize,
    pub rho_x: f64,
    pub rho_y: f64,
    pub nested: NestedOutcome,
}

/// Nested quantization with `n1 = floor(n^alpha)` blocks for `X` and
/// `n2 = floor(n^(1-alpha))` for `Y` on a random sub-space of mass
/// `n1*n2/n`; the complement is quantized on `X` alone into the remaining
/// `n - n1*n2` blocks and glued on.
pub fn simultaneous_quantize(
    x: &RandomVariable,
    y: &RandomVariable,
    n: usize,
    alpha: f64,
    opts: &QuantizeOptions,
) -> Result<SimultaneousOutcome> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    if x.space() != y.space() {
        return invalid("X and Y live on different spaces");
    }
    let k = x.space().atoms();
    if n == 0 || !k.is_multiple_of(n) {
        return invalid(format!("{k} atoms are not divisible into {n} blocks"));
    }
    let n1 = floor_pow(n, alpha).max(1);
    let n2 = floor_pow(n, 1.0 - alpha).max(1);
    let remainder = n - n1 * n2;
    if remainder == 0 {
        let nested = nested_partition(x, y, n1, n2, opts)?;
        return Ok(SimultaneousOutcome {
            partition: nested.partition.clone(),
            n1,
            n2,
            remainder,
            rho_x: nested.rho_x,
            rho_y: nested.rho_y,
            nested,
        });
    }
    let size = k / n;
    let mut atoms: Vec<usize> = (0..k).collect();
    atoms.shuffle(&mut stream(opts.seed, &[3]));
    let (gamma, hat) = atoms.split_at_mut(remainder * size);
    gamma.sort_unstable();
    hat.sort_unstable();

    let nested = nested_partition(&x.restrict(hat)?, &y.restrict(hat)?, n1, n2, opts)?;
    let rest_opts = opts.clone().with_seed(derive_seed(opts.seed, &[4]));
    let rest = balanced_quantize(&x.restrict(gamma)?, remainder, &rest_opts)?;
    let merged = merge_partitions(x, hat, gamma, &nested.partition, &rest.partition)?;
    Ok(SimultaneousOutcome {
        rho_x: merged.rho_direct,
        rho_y: rho(y, &merged.partition)?,
        partition: merged.partition,
        n1,
        n2,
        remainder,
        nested,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob_space::AtomSpace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rv(k: usize, d: usize, seed: u64) -> RandomVariable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..k * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        RandomVariable::new(AtomSpace::new(k).unwrap(), d, vals).unwrap()
    }

    #[test]
    fn floor_pow_is_robust() {
        assert_eq!(floor_pow(64, 0.5), 8);
        assert_eq!(floor_pow(27, 1.0 / 3.0), 3);
        assert_eq!(floor_pow(1000, 1.0 / 3.0), 10);
        assert_eq!(floor_pow(512, 0.3), 6);
        assert_eq!(floor_pow(1, 0.7), 1);
    }

    #[test]
    fn merge_identity() {
        let x = random_rv(60, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut atoms: Vec<usize> = (0..60).collect();
        atoms.shuffle(&mut rng);
        let (gamma, hat) = atoms.split_at(20);
        let opts = QuantizeOptions::default();
        let ph = balanced_quantize(&x.restrict(hat).unwrap(), 4, &opts).unwrap();
        let pg = balanced_quantize(&x.restrict(gamma).unwrap(), 2, &opts).unwrap();
        let m = merge_partitions(&x, hat, gamma, &ph.partition, &pg.partition).unwrap();
        assert_eq!(m.partition.len(), 6);
        assert!((m.rho_direct - m.rho_recombined).abs() < 1e-12);
        assert!(merge_partitions(&x, hat, gamma, &pg.partition, &ph.partition).is_err());
        assert!(merge_partitions(&x, &hat[1..], gamma, &ph.partition, &pg.partition).is_err());
    }

    #[test]
    fn nested_identity() {
        let x = random_rv(120, 2, 3);
        let y = random_rv(120, 3, 4);
        let out = nested_partition(&x, &y, 3, 4, &QuantizeOptions::default()).unwrap();
        assert_eq!(out.partition.len(), 12);
        assert!(out.partition.refines(&out.coarse));
        assert!((out.rho_y - out.rho_y_decomposed).abs() < 1e-12);
        assert!(out.rho_x <= out.rho_x_coarse + 1e-12);
    }

    #[test]
    fn simultaneous_without_remainder_is_nested() {
        let x = random_rv(64, 1, 5);
        let y = random_rv(64, 1, 6);
        let opts = QuantizeOptions::default().with_seed(9);
        let s = simultaneous_quantize(&x, &y, 16, 0.5, &opts).unwrap();
        assert_eq!((s.n1, s.n2, s.remainder), (4, 4, 0));
        let n = nested_partition(&x, &y, 4, 4, &opts).unwrap();
        assert_eq!(s.partition, n.partition);
    }

    #[test]
    fn simultaneous_with_remainder() {
        let x = random_rv(120, 2, 7);
        let y = random_rv(120, 2, 8);
        let s = simultaneous_quantize(&x, &y, 10, 0.5, &QuantizeOptions::default()).unwrap();
        assert_eq!((s.n1, s.n2, s.remainder), (3, 3, 1));
        assert_eq!(s.partition.len(), 10);
        assert!((rho(&x, &s.partition).unwrap() - s.rho_x).abs() < 1e-12);
        assert!(simultaneous_quantize(&x, &y, 10, 1.0, &QuantizeOptions::default()).is_err());
    }
}
