//! Empirical probability measures on R^d and Wasserstein distances between
//! them.
//!
//! Every measure here is a uniform average of Dirac masses, so optimal
//! transport between two of them reduces to a (balanced) assignment
//! problem. In one dimension the optimal pairing is by rank.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::assignment::{self, BalancedAssignment, DEFAULT_MAX_SIZE};
use crate::error::{invalid, LabError, Result};

/// A point of R^d with finite coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return invalid("point must have at least one coordinate");
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return invalid("point coordinates must be finite");
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

/// Transport cost exponent `p` in `|x - y|^p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exponent {
    One,
    Two,
}

impl Exponent {
    #[inline]
    pub fn cost(self, a: &[f64], b: &[f64]) -> f64 {
        let sq = squared_distance(a, b);
        match self {
            Exponent::One => sq.sqrt(),
            Exponent::Two => sq,
        }
    }

    #[inline]
    pub fn root(self, mean_cost: f64) -> f64 {
        let v = mean_cost.max(0.0);
        match self {
            Exponent::One => v,
            Exponent::Two => v.sqrt(),
        }
    }
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `N` equally weighted points in R^d, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    coords: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Builds a measure from a flat row-major coordinate table.
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be positive");
        }
        if coords.is_empty() || !coords.len().is_multiple_of(dim) {
            return invalid(format!(
                "coordinate table of length {} is not a nonempty multiple of dim {dim}",
                coords.len()
            ));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return invalid("measure contains non-finite coordinates");
        }
        Ok(Self { dim, coords })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if points.iter().any(|p| p.len() != dim) {
            return invalid("ragged point list");
        }
        Self::new(dim, points.concat())
    }

    /// Dirac mass at `p`.
    pub fn dirac(p: &[f64]) -> Result<Self> {
        Self::new(p.len(), p.to_vec())
    }

    /// One-dimensional measure with the given atoms.
    pub fn from_1d(values: &[f64]) -> Result<Self> {
        Self::new(1, values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for p in self.points() {
            acc.iter_mut().zip(p).for_each(|(a, x)| *a += x);
        }
        let n = self.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Each point repeated `k` times (same law, `k` times as many atoms).
    pub fn replicate(&self, k: usize) -> Self {
        let mut coords = Vec::with_capacity(self.coords.len() * k);
        for p in self.points() {
            for _ in 0..k {
                coords.extend_from_slice(p);
            }
        }
        Self {
            dim: self.dim,
            coords,
        }
    }

    /// Point indices sorted by the first coordinate, ties by index.
    pub fn rank_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&i, &j| {
            self.point(i)[0]
                .total_cmp(&self.point(j)[0])
                .then(i.cmp(&j))
        });
        idx
    }

    /// Reads one point per row, `dim` columns, no header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut dim = 0;
        let mut coords = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if dim == 0 {
                dim = rec.len();
            } else if rec.len() != dim {
                return invalid("ragged CSV rows");
            }
            for field in rec.iter() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| LabError::InvalidInput(format!("bad number `{field}`")))?;
                coords.push(v);
            }
        }
        Self::new(dim, coords)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        for p in self.points() {
            wtr.write_record(p.iter().map(|v| format!("{v:?}")))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// JSON array of coordinate arrays.
    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<&[f64]> = self.points().collect();
        Ok(serde_json::to_string(&rows)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = serde_json::from_str(text)?;
        Self::from_points(&rows)
    }
}

/// A large sample of a reference measure, e.g. the uniform law on the unit
/// cube, used as the target of semi-discrete transport.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledMeasure {
    samples: EmpiricalMeasure,
    source: String,
}

impl SampledMeasure {
    pub fn new(samples: EmpiricalMeasure, source: impl Into<String>) -> Self {
        Self {
            samples,
            source: source.into(),
        }
    }

    /// Midpoints of a regular grid with `per_side^dim` cells on `[0,1]^dim`.
    pub fn cube_grid(dim: usize, per_side: usize) -> Result<Self> {
        if per_side == 0 {
            return invalid("grid needs at least one cell per side");
        }
        let total = per_side.pow(dim as u32);
        let mut coords = Vec::with_capacity(total * dim);
        for idx in 0..total {
            let mut rest = idx;
            for _ in 0..dim {
                coords.push(((rest % per_side) as f64 + 0.5) / per_side as f64);
                rest /= per_side;
            }
        }
        Ok(Self::new(
            EmpiricalMeasure::new(dim, coords)?,
            "uniform-cube-grid",
        ))
    }

    /// `count` independent uniform samples of `[0,1]^dim`.
    pub fn uniform_cube<R: rand::Rng>(dim: usize, count: usize, rng: &mut R) -> Result<Self> {
        let coords: Vec<f64> = (0..dim * count).map(|_| rng.random::<f64>()).collect();
        Ok(Self::new(
            EmpiricalMeasure::new(dim, coords)?,
            "uniform-cube",
        ))
    }

    /// Stratified samples: one uniform draw in each cell of a `per_side^dim`
    /// grid, repeated `per_cell` times.
    pub fn stratified_cube<R: rand::Rng>(
        dim: usize,
        per_side: usize,
        per_cell: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let cells = per_side.pow(dim as u32);
        let mut coords = Vec::with_capacity(cells * per_cell * dim);
        for _ in 0..per_cell {
            for idx in 0..cells {
                let mut rest = idx;
                for _ in 0..dim {
                    let c = (rest % per_side) as f64;
                    coords.push((c + rng.random::<f64>()) / per_side as f64);
                    rest /= per_side;
                }
            }
        }
        Ok(Self::new(
            EmpiricalMeasure::new(dim, coords)?,
            "uniform-cube-stratified",
        ))
    }

    pub fn samples(&self) -> &EmpiricalMeasure {
        &self.samples
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }
}

/// An optimal pairing between two equal-size measures.
#[derive(Debug, Clone, PartialEq)]
pub struct Transport {
    pub distance: f64,
    /// `matching[i]` is the index in the second measure paired with point `i`
    /// of the first.
    pub matching: Vec<usize>,
}

fn same_dim(a: &EmpiricalMeasure, b: &EmpiricalMeasure) -> Result<()> {
    if a.dim() != b.dim() {
        return invalid(format!("dimension mismatch: {} vs {}", a.dim(), b.dim()));
    }
    Ok(())
}

/// Exact `d_p` between two one-dimensional measures of equal size by
/// pairing ranks.
pub fn wasserstein_1d(a: &EmpiricalMeasure, b: &EmpiricalMeasure, p: Exponent) -> Result<f64> {
    if a.dim() != 1 || b.dim() != 1 {
        return invalid("wasserstein_1d needs one-dimensional measures");
    }
    if a.len() != b.len() {
        return invalid(format!("unequal sizes {} and {}", a.len(), b.len()));
    }
    let (ra, rb) = (a.rank_order(), b.rank_order());
    let total: f64 = ra
        .iter()
        .zip(&rb)
        .map(|(&i, &j)| p.cost(a.point(i), b.point(j)))
        .sum();
    Ok(p.root(total / a.len() as f64))
}

/// Exact `d_p` between equal-size measures via linear assignment, using the
/// default size cap.
pub fn wasserstein_assignment(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    p: Exponent,
) -> Result<Transport> {
    wasserstein_assignment_capped(a, b, p, DEFAULT_MAX_SIZE)
}

/// As [`wasserstein_assignment`] with an explicit cap on `N`.
pub fn wasserstein_assignment_capped(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    p: Exponent,
    max_size: usize,
) -> Result<Transport> {
    same_dim(a, b)?;
    let n = a.len();
    if n != b.len() {
        return invalid(format!("unequal sizes {} and {}", n, b.len()));
    }
    let mut cost = Vec::with_capacity(n * n);
    for pa in a.points() {
        for pb in b.points() {
            cost.push(p.cost(pa, pb));
        }
    }
    let BalancedAssignment { owner, total_cost } = assignment::solve_square(&cost, n, max_size)?;
    Ok(Transport {
        distance: p.root(total_cost / n as f64),
        matching: owner,
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Largest cost matrix the general transport routine will build.
const MAX_COST_ENTRIES: usize = 1 << 26;

/// Exact `d_p` between two uniform empirical measures of arbitrary sizes.
///
/// Both are brought to `L = lcm(M, N)` atoms; the larger measure's atoms
/// become assignment rows and the smaller measure's points become columns
/// with capacity `L / N`.
pub fn wasserstein_uniform(a: &EmpiricalMeasure, b: &EmpiricalMeasure, p: Exponent) -> Result<f64> {
    same_dim(a, b)?;
    let (big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let (m, n) = (big.len(), small.len());
    let l = m / gcd(m, n) * n;
    if l.saturating_mul(n) > MAX_COST_ENTRIES {
        return Err(LabError::Resource(format!(
            "transport between {m} and {n} atoms needs a {l}x{n} cost matrix"
        )));
    }
    let rep = l / m;
    let mut cost = Vec::with_capacity(l * n);
    for pa in big.points() {
        let start = cost.len();
        for pb in small.points() {
            cost.push(p.cost(pa, pb));
        }
        for _ in 1..rep {
            cost.extend_from_within(start..start + n);
        }
    }
    let sol = assignment::solve_balanced(&cost, l, n, l / n)?;
    Ok(p.root(sol.total_cost / l as f64))
}

/// Optimal balanced transport from `samples` (rows) onto `a` (columns).
/// Returns the owner of each sample and the mean squared cost.
pub(crate) fn semidiscrete_plan(
    a: &EmpiricalMeasure,
    samples: &EmpiricalMeasure,
) -> Result<(Vec<usize>, f64)> {
    same_dim(a, samples)?;
    let (n, m) = (a.len(), samples.len());
    if m % n != 0 {
        return invalid(format!(
            "sample count {m} is not a multiple of the measure size {n}"
        ));
    }
    let mut cost = Vec::with_capacity(m * n);
    for s in samples.points() {
        for q in a.points() {
            cost.push(squared_distance(s, q));
        }
    }
    let sol = assignment::solve_balanced(&cost, m, n, m / n)?;
    Ok((sol.owner, sol.total_cost / m as f64))
}

/// `d_2(a, b)` where `b` is a sample of a reference measure with `M = kN`
/// points: each point of `a` is replicated `k` times and the two `M`-point
/// clouds are matched exactly.
pub fn wasserstein_semidiscrete(a: &EmpiricalMeasure, b: &SampledMeasure) -> Result<f64> {
    let (_, mean_cost) = semidiscrete_plan(a, b.samples())?;
    Ok(mean_cost.max(0.0).sqrt())
}

/// Second moment `(1/N) sum |x_i|^2`.
pub fn second_moment(m: &EmpiricalMeasure) -> f64 {
    m.coords().iter().map(|v| v * v).sum::<f64>() / m.len() as f64
}

/// Translates every point by `z`.
pub fn shift(m: &EmpiricalMeasure, z: &[f64]) -> Result<EmpiricalMeasure> {
    if z.len() != m.dim() {
        return invalid(format!(
            "shift of dimension {} applied to a measure of dimension {}",
            z.len(),
            m.dim()
        ));
    }
    let coords = m
        .coords()
        .chunks_exact(m.dim())
        .flat_map(|p| p.iter().zip(z).map(|(x, dz)| x + dz))
        .collect();
    EmpiricalMeasure::new(m.dim(), coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m1(v: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_1d(v).unwrap()
    }

    #[test]
    fn one_dimensional_example() {
        let d = wasserstein_1d(&m1(&[0.0, 1.0]), &m1(&[0.5, 1.5]), Exponent::Two).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        let a = m1(&[0.3, -2.0, 4.0]);
        assert_eq!(wasserstein_1d(&a, &a, Exponent::Two).unwrap(), 0.0);
    }

    #[test]
    fn one_dimensional_rejects_bad_input() {
        let a = EmpiricalMeasure::from_points(&[vec![0.0, 0.0]]).unwrap();
        assert!(wasserstein_1d(&a, &a, Exponent::Two).is_err());
        assert!(wasserstein_1d(&m1(&[0.0]), &m1(&[0.0, 1.0]), Exponent::Two).is_err());
    }

    #[test]
    fn swap_is_free() {
        let a = EmpiricalMeasure::from_points(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let b = EmpiricalMeasure::from_points(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let t = wasserstein_assignment(&a, &b, Exponent::Two).unwrap();
        assert_eq!(t.distance, 0.0);
        assert_eq!(t.matching, vec![1, 0]);
    }

    #[test]
    fn assignment_size_cap() {
        let a = m1(&[0.0, 1.0, 2.0]);
        assert!(matches!(
            wasserstein_assignment_capped(&a, &a, Exponent::Two, 2),
            Err(LabError::Resource(_))
        ));
        assert!(wasserstein_assignment(&a, &m1(&[0.0]), Exponent::Two).is_err());
    }

    #[test]
    fn semidiscrete_center_of_unit_interval() {
        let leb = SampledMeasure::cube_grid(1, 4096).unwrap();
        let a = m1(&[0.5]);
        let d = wasserstein_semidiscrete(&a, &leb).unwrap();
        assert!((d - (1.0f64 / 12.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn semidiscrete_identical_points() {
        let a = m1(&[0.1, 0.7, 0.4]);
        let b = SampledMeasure::new(a.clone(), "self");
        assert_eq!(wasserstein_semidiscrete(&a, &b).unwrap(), 0.0);
        let bad = SampledMeasure::new(m1(&[0.0, 1.0]), "two");
        assert!(wasserstein_semidiscrete(&a, &bad).is_err());
    }

    #[test]
    fn semidiscrete_subcube_centers() {
        let mut centers = Vec::new();
        for i in 0..8 {
            centers.push(vec![
                0.25 + 0.5 * (i & 1) as f64,
                0.25 + 0.5 * ((i >> 1) & 1) as f64,
                0.25 + 0.5 * ((i >> 2) & 1) as f64,
            ]);
        }
        let a = EmpiricalMeasure::from_points(&centers).unwrap();
        let leb = SampledMeasure::cube_grid(3, 16).unwrap();
        let d = wasserstein_semidiscrete(&a, &leb).unwrap();
        // grid of 8 midpoints per half side: per-axis variance (1/16)^2 * 63 / 12
        let expected = (3.0 * 63.0 / 12.0 / 256.0f64).sqrt();
        assert!((d - expected).abs() < 1e-12);
        assert!((d - 0.25).abs() < 3e-3);
    }

    #[test]
    fn uniform_transport_handles_unequal_sizes() {
        let a = m1(&[0.0, 1.0]);
        let b = m1(&[0.0, 0.5, 1.0]);
        // lcm 6: a atoms 0,0,0,1,1,1 vs b atoms 0,0,.5,.5,1,1
        let d = wasserstein_uniform(&a, &b, Exponent::Two).unwrap();
        assert!((d - (2.0 * 0.25 / 6.0f64).sqrt()).abs() < 1e-14);
        let d1 = wasserstein_uniform(&a, &b, Exponent::One).unwrap();
        assert!((d1 - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn second_moment_and_shift() {
        assert_eq!(
            second_moment(&EmpiricalMeasure::dirac(&[0.0, 0.0]).unwrap()),
            0.0
        );
        let m = EmpiricalMeasure::from_points(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!((second_moment(&m) - 1.0).abs() < 1e-15);
        assert_eq!(shift(&m, &[0.0, 0.0]).unwrap(), m);
        assert!(shift(&m, &[1.0]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let coords: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
            let m = EmpiricalMeasure::new(2, coords).unwrap();
            let z = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let mean = m.mean();
            let expected = 2.0 * (z[0] * mean[0] + z[1] * mean[1]) + z[0] * z[0] + z[1] * z[1];
            let got = second_moment(&shift(&m, &z).unwrap()) - second_moment(&m);
            assert!((got - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_and_json_io() {
        let m = EmpiricalMeasure::from_points(&[vec![1.5, -2.0], vec![0.1, 3.0]]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(EmpiricalMeasure::read_csv(buf.as_slice()).unwrap(), m);
        assert_eq!(
            EmpiricalMeasure::from_json(&m.to_json().unwrap()).unwrap(),
            m
        );

        assert!(EmpiricalMeasure::read_csv("1,2\n3\n".as_bytes()).is_err());
        assert!(EmpiricalMeasure::from_json("[[1,2],[3]]").is_err());
        assert!(EmpiricalMeasure::read_csv("1,x\n".as_bytes()).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(EmpiricalMeasure::new(1, vec![f64::NAN]).is_err());
        assert!(EmpiricalMeasure::new(2, vec![1.0]).is_err());
        assert!(Point::new(vec![f64::INFINITY]).is_err());
    }
}
