//! The probability space `[0,1]` discretized into `K` atoms of mass `1/K`,
//! random variables as `K x d` value tables, and equal-mass partitions.
//!
//! All operations are exact reductions over the tables: conditional
//! expectations are block means and norms are atom averages.

use std::io::{Read, Write};

use crate::error::{invalid, LabError, Result};
use crate::measure::{squared_distance, EmpiricalMeasure};

/// `K` atoms of equal mass; atom `i` stands for `[i/K, (i+1)/K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AtomSpace {
    atoms: usize,
}

impl AtomSpace {
    pub fn new(atoms: usize) -> Result<Self> {
        if atoms == 0 {
            return invalid("atom space needs at least one atom");
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn mass(&self) -> f64 {
        1.0 / self.atoms as f64
    }

    /// Left endpoint of atom `i`.
    pub fn omega(&self, i: usize) -> f64 {
        i as f64 / self.atoms as f64
    }
}

/// Which `L^p` norm to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
    Inf,
}

/// A random variable on an [`AtomSpace`]: one point of R^d per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomVariable {
    space: AtomSpace,
    dim: usize,
    values: Vec<f64>,
}

impl RandomVariable {
    pub fn new(space: AtomSpace, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        if values.len() != space.atoms() * dim {
            return invalid(format!(
                "value table has {} entries, expected {} x {dim}",
                values.len(),
                space.atoms()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("random variable has non-finite values");
        }
        Ok(Self { space, dim, values })
    }

    /// Builds the variable from a closure of the atom's left endpoint.
    pub fn from_fn(space: AtomSpace, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut values = Vec::with_capacity(space.atoms() * dim);
        for i in 0..space.atoms() {
            let v = f(space.omega(i));
            if v.len() != dim {
                return invalid("closure returned a value of the wrong dimension");
            }
            values.extend(v);
        }
        Self::new(space, dim, values)
    }

    /// One atom per point of `m`.
    pub fn from_measure(m: &EmpiricalMeasure) -> Self {
        Self {
            space: AtomSpace { atoms: m.len() },
            dim: m.dim(),
            values: m.coords().to_vec(),
        }
    }

    pub fn constant(space: AtomSpace, c: &[f64]) -> Result<Self> {
        Self::new(space, c.len(), c.repeat(space.atoms()))
    }

    pub fn space(&self) -> AtomSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, atom: usize) -> &[f64] {
        &self.values[atom * self.dim..(atom + 1) * self.dim]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            space: self.space,
            dim: self.dim,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Pointwise difference `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.space != other.space || self.dim != other.dim {
            return invalid("random variables live on different spaces");
        }
        Ok(Self {
            space: self.space,
            dim: self.dim,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Restriction to a subset of atoms, renormalized to a probability space
    /// with `atoms.len()` atoms (in the given order).
    pub fn restrict(&self, atoms: &[usize]) -> Result<Self> {
        let space = AtomSpace::new(atoms.len())?;
        let mut values = Vec::with_capacity(atoms.len() * self.dim);
        for &a in atoms {
            if a >= self.space.atoms() {
                return invalid(format!("atom {a} out of range"));
            }
            values.extend_from_slice(self.value(a));
        }
        Ok(Self {
            space,
            dim: self.dim,
            values,
        })
    }

    /// `E[X]`.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for v in self.values.chunks_exact(self.dim) {
            acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
        }
        let k = self.space.atoms() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        acc
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let m = EmpiricalMeasure::read_csv(reader)?;
        Ok(Self::from_measure(&m))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        law(self).write_csv(writer)
    }
}

/// An equal-mass partition of the atoms into `N` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    space: AtomSpace,
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl Partition {
    /// Validates disjointness, coverage and equal block sizes. Atom indices
    /// inside each block are sorted.
    pub fn new(space: AtomSpace, mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let k = space.atoms();
        let n = blocks.len();
        if n == 0 {
            return invalid("partition needs at least one block");
        }
        if !k.is_multiple_of(n) {
            return invalid(format!("{k} atoms cannot be split into {n} equal blocks"));
        }
        let size = k / n;
        let mut block_of = vec![usize::MAX; k];
        for (b, block) in blocks.iter_mut().enumerate() {
            if block.len() != size {
                return invalid(format!(
                    "block {b} has {} atoms, expected {size}",
                    block.len()
                ));
            }
            block.sort_unstable();
            for &a in block.iter() {
                if a >= k {
                    return invalid(format!("atom {a} out of range"));
                }
                if block_of[a] != usize::MAX {
                    return invalid(format!("atom {a} appears in two blocks"));
                }
                block_of[a] = b;
            }
        }
        Ok(Self {
            space,
            blocks,
            block_of,
        })
    }

    /// Partition from a block label per atom.
    pub fn from_labels(space: AtomSpace, labels: &[usize], n: usize) -> Result<Self> {
        if labels.len() != space.atoms() {
            return invalid("one label per atom required");
        }
        let mut blocks = vec![Vec::new(); n];
        for (a, &l) in labels.iter().enumerate() {
            if l >= n {
                return invalid(format!("label {l} out of range"));
            }
            blocks[l].push(a);
        }
        Self::new(space, blocks)
    }

    pub fn space(&self) -> AtomSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_of(&self, atom: usize) -> usize {
        self.block_of[atom]
    }

    pub fn block_size(&self) -> usize {
        self.space.atoms() / self.blocks.len()
    }

    /// True when every block of `self` lies inside one block of `coarse`.
    pub fn refines(&self, coarse: &Partition) -> bool {
        self.space == coarse.space
            && self.blocks.iter().all(|b| {
                let owner = coarse.block_of(b[0]);
                b.iter().all(|&a| coarse.block_of(a) == owner)
            })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.blocks)?)
    }

    /// Reads a JSON list of index lists; the atom count is the total number
    /// of indices.
    pub fn from_json(text: &str) -> Result<Self> {
        let blocks: Vec<Vec<usize>> = serde_json::from_str(text)?;
        let k = blocks.iter().map(Vec::len).sum();
        Self::new(AtomSpace::new(k)?, blocks)
    }
}

fn check_space(x: &RandomVariable, p: &Partition) -> Result<()> {
    if x.space() != p.space() {
        return Err(LabError::InvalidInput(format!(
            "random variable on {} atoms, partition on {}",
            x.space().atoms(),
            p.space().atoms()
        )));
    }
    Ok(())
}

/// `||X||_p` with the Euclidean norm per atom.
pub fn lp_norm(x: &RandomVariable, p: Norm) -> f64 {
    let norms = x
        .values
        .chunks_exact(x.dim)
        .map(|v| v.iter().map(|c| c * c).sum::<f64>());
    let k = x.space.atoms() as f64;
    match p {
        Norm::L1 => norms.map(f64::sqrt).sum::<f64>() / k,
        Norm::L2 => (norms.sum::<f64>() / k).sqrt(),
        Norm::Inf => norms.map(f64::sqrt).fold(0.0, f64::max),
    }
}

/// Block means, one row per block.
pub fn block_means(x: &RandomVariable, p: &Partition) -> Result<Vec<f64>> {
    check_space(x, p)?;
    let d = x.dim;
    let mut means = vec![0.0; p.len() * d];
    for (b, block) in p.blocks.iter().enumerate() {
        let acc = &mut means[b * d..(b + 1) * d];
        for &a in block {
            acc.iter_mut().zip(x.value(a)).for_each(|(s, v)| *s += v);
        }
        let size = block.len() as f64;
        acc.iter_mut().for_each(|s| *s /= size);
    }
    Ok(means)
}

/// `E[X | F_Pi]`: each atom replaced by its block mean.
pub fn cond_exp(x: &RandomVariable, p: &Partition) -> Result<RandomVariable> {
    let means = block_means(x, p)?;
    let d = x.dim;
    let mut values = Vec::with_capacity(x.values.len());
    for a in 0..x.space.atoms() {
        let b = p.block_of(a);
        values.extend_from_slice(&means[b * d..(b + 1) * d]);
    }
    Ok(RandomVariable {
        space: x.space,
        dim: d,
        values,
    })
}

/// `rho(X, Pi) = ||X - E[X | F_Pi]||_2`.
pub fn rho(x: &RandomVariable, p: &Partition) -> Result<f64> {
    let means = block_means(x, p)?;
    let d = x.dim;
    let mut acc = 0.0;
    for (b, block) in p.blocks.iter().enumerate() {
        let m = &means[b * d..(b + 1) * d];
        for &a in block {
            acc += squared_distance(x.value(a), m);
        }
    }
    Ok((acc / x.space.atoms() as f64).sqrt())
}

/// `Y_{x,Pi}`: value `x^i` on every atom of block `i`.
pub fn embed(x: &EmpiricalMeasure, p: &Partition) -> Result<RandomVariable> {
    if x.len() != p.len() {
        return invalid(format!(
            "{} points cannot be placed on {} blocks",
            x.len(),
            p.len()
        ));
    }
    let d = x.dim();
    let mut values = vec![0.0; p.space.atoms() * d];
    for (b, block) in p.blocks.iter().enumerate() {
        for &a in block {
            values[a * d..(a + 1) * d].copy_from_slice(x.point(b));
        }
    }
    Ok(RandomVariable {
        space: p.space,
        dim: d,
        values,
    })
}

/// Law of `X` as a `K`-point empirical measure.
pub fn law(x: &RandomVariable) -> EmpiricalMeasure {
    EmpiricalMeasure::new(x.dim, x.values.clone()).expect("validated table")
}

/// Monotone rearrangement of a one-dimensional measure: atom `i` takes the
/// value `inf { t : m((-inf, t]) > i/K }`.
pub fn quantile_rv(m: &EmpiricalMeasure, space: AtomSpace) -> Result<RandomVariable> {
    if m.dim() != 1 {
        return invalid("quantile_rv needs a one-dimensional measure");
    }
    let order = m.rank_order();
    let (n, k) = (m.len(), space.atoms());
    let values = (0..k).map(|i| m.point(order[i * n / k])[0]).collect();
    RandomVariable::new(space, 1, values)
}

/// Contiguous blocks `[iK/N, (i+1)K/N)`.
pub fn regular_partition(space: AtomSpace, n: usize) -> Result<Partition> {
    let k = space.atoms();
    if n == 0 || !k.is_multiple_of(n) {
        return invalid(format!("{k} atoms are not divisible into {n} blocks"));
    }
    let size = k / n;
    let blocks = (0..n)
        .map(|b| (b * size..(b + 1) * size).collect())
        .collect();
    Partition::new(space, blocks)
}
