use std::io::Write;

use crate::error::{invalid, LabError, Result};
use crate::measure::EmpiricalMeasure;

use super::problem::{HamiltonianSpec, TerminalCost};

/// Grid for [`solve_fd`]: the box `[-radius, radius]^(N d)` with the given
/// spacing, time step and horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdGrid {
    pub radius: f64,
    pub spacing: f64,
    pub dt: f64,
    pub horizon: f64,
    /// Upper bound on the number of stored time slices.
    pub max_slices: usize,
}

impl FdGrid {
    pub fn new(radius: f64, spacing: f64, dt: f64, horizon: f64) -> Self {
        Self {
            radius,
            spacing,
            dt,
            horizon,
            max_slices: 101,
        }
    }
}

/// Largest stable time step for the explicit scheme.
pub fn admissible_dt(theta: f64, kappa: f64, n: usize, d: usize, spacing: f64) -> f64 {
    let rate = (n * d) as f64 * theta / spacing + 2.0 * kappa * d as f64 / (spacing * spacing);
    if rate > 0.0 {
        1.0 / rate
    } else {
        f64::INFINITY
    }
}

/// Value table `V^N(t, x)` on a tensor grid, stored at a subset of times.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    n: usize,
    d: usize,
    axis: Vec<f64>,
    spacing: f64,
    dt: f64,
    times: Vec<f64>,
    slices: Vec<Vec<f64>>,
}

impl ValueTable {
    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Grid coordinates along every axis.
    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Stored times, increasing.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        &self.slices[i]
    }

    pub fn node_count(&self) -> usize {
        self.axis.len().pow((self.n * self.d) as u32)
    }

    /// State vector of node `j`; axis 0 varies fastest.
    pub fn node(&self, mut j: usize) -> Vec<f64> {
        let m = self.axis.len();
        (0..self.n * self.d)
            .map(|_| {
                let v = self.axis[j % m];
                j /= m;
                v
            })
            .collect()
    }

    fn spatial(&self, slice: &[f64], x: &[f64]) -> f64 {
        let m = self.axis.len();
        let lo = self.axis[0];
        let dims = x.len();
        let mut base = 0;
        let mut stride = 1;
        let mut fracs = Vec::with_capacity(dims);
        let mut strides = Vec::with_capacity(dims);
        for &xi in x {
            let s = ((xi - lo) / self.spacing).clamp(0.0, (m - 1) as f64);
            let i0 = (s.floor() as usize).min(m - 2);
            fracs.push(s - i0 as f64);
            base += i0 * stride;
            strides.push(stride);
            stride *= m;
        }
        let mut total = 0.0;
        for corner in 0..(1usize << dims) {
            let mut w = 1.0;
            let mut idx = base;
            for a in 0..dims {
                if corner >> a & 1 == 1 {
                    w *= fracs[a];
                    idx += strides[a];
                } else {
                    w *= 1.0 - fracs[a];
                }
            }
            if w != 0.0 {
                total += w * slice[idx];
            }
        }
        total
    }

    /// Multilinear interpolation in space, linear in time; states outside
    /// the box are clamped onto it.
    pub fn value(&self, t: f64, x: &[f64]) -> Result<f64> {
        if x.len() != self.n * self.d {
            return invalid(format!(
                "state of length {} for a {}-dimensional grid",
                x.len(),
                self.n * self.d
            ));
        }
        let t = t.clamp(self.times[0], *self.times.last().expect("nonempty"));
        let k = self.times.partition_point(|&s| s < t);
        if k == 0 || self.times[k] == t {
            return Ok(self.spatial(&self.slices[k], x));
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Ok((1.0 - w) * self.spatial(&self.slices[k - 1], x) + w * self.spatial(&self.slices[k], x))
    }

    /// CSV with header `t,x1,...,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let dims = self.n * self.d;
        let mut header = vec!["t".to_string()];
        header.extend((1..=dims).map(|a| format!("x{a}")));
        header.push("value".into());
        w.write_record(&header)?;
        for (t, slice) in self.times.iter().zip(&self.slices) {
            for (j, v) in slice.iter().enumerate() {
                let mut rec = vec![t.to_string()];
                rec.extend(self.node(j).iter().map(f64::to_string));
                rec.push(v.to_string());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Explicit monotone scheme for the particle equation with `N d <= 2`.
///
/// Each particle's Hamiltonian term uses a local Lax-Friedrichs flux with
/// dissipation `theta`, the bound on `|dH/dp|` over the truncation ball. The
/// common-noise operator is the second difference along the direction that
/// moves every particle's `k`-th coordinate together. Outside the box the
/// solution is extended by its boundary values.
pub fn solve_fd(
    h: &HamiltonianSpec,
    g: &dyn TerminalCost,
    n: usize,
    d: usize,
    kappa: f64,
    grid: &FdGrid,
) -> Result<ValueTable> {
    let dims = n * d;
    if dims == 0 {
        return invalid("need at least one particle and one dimension");
    }
    if dims > 2 {
        return Err(LabError::Unsupported(format!(
            "finite differences need N*d <= 2, got N={n}, d={d}"
        )));
    }
    if !(grid.radius > 0.0 && grid.spacing > 0.0 && grid.dt > 0.0 && grid.horizon > 0.0) {
        return Err(LabError::Config(format!(
            "grid parameters must be positive: {grid:?}"
        )));
    }
    if !(kappa >= 0.0) {
        return invalid(format!("kappa must be nonnegative, got {kappa}"));
    }
    let cells = (2.0 * grid.radius / grid.spacing).round().max(1.0) as usize;
    let spacing = 2.0 * grid.radius / cells as f64;
    let m = cells + 1;
    let axis: Vec<f64> = (0..m).map(|i| -grid.radius + i as f64 * spacing).collect();
    let steps = (grid.horizon / grid.dt - 1e-9).ceil().max(1.0) as usize;
    let dt = grid.horizon / steps as f64;
    let theta = h.p_lipschitz();
    let limit = admissible_dt(theta, kappa, n, d, spacing);
    if dt > limit * (1.0 + 1e-12) {
        return Err(LabError::Config(format!(
            "time step {dt} violates the stability bound; use dt <= {limit}"
        )));
    }

    let nodes = m.pow(dims as u32);
    let strides: Vec<usize> = (0..dims).map(|a| m.pow(a as u32)).collect();
    let mut states = Vec::with_capacity(nodes);
    let mut measures = Vec::with_capacity(nodes);
    let mut index = vec![0usize; dims];
    for j in 0..nodes {
        let mut r = j;
        for idx in index.iter_mut() {
            *idx = r % m;
            r /= m;
        }
        let x: Vec<f64> = index.iter().map(|&i| axis[i]).collect();
        measures.push(EmpiricalMeasure::new(d, x.clone())?);
        states.push(x);
    }
    // neighbour tables with clamping at the box
    let shift = |j: usize, dirs: &[usize], up: bool| -> usize {
        let mut out = j;
        for &a in dirs {
            let i = j / strides[a] % m;
            if up && i + 1 < m {
                out += strides[a];
            } else if !up && i > 0 {
                out -= strides[a];
            }
        }
        out
    };
    let axis_nb: Vec<[Vec<usize>; 2]> = (0..dims)
        .map(|a| {
            [
                (0..nodes).map(|j| shift(j, &[a], false)).collect(),
                (0..nodes).map(|j| shift(j, &[a], true)).collect(),
            ]
        })
        .collect();
    let diag_nb: Vec<[Vec<usize>; 2]> = (0..d)
        .map(|k| {
            let dirs: Vec<usize> = (0..n).map(|i| i * d + k).collect();
            [
                (0..nodes).map(|j| shift(j, &dirs, false)).collect(),
                (0..nodes).map(|j| shift(j, &dirs, true)).collect(),
            ]
        })
        .collect();

    let mut v: Vec<f64> = measures
        .iter()
        .map(|mx| g.value(mx))
        .collect::<Result<_>>()?;
    let stride = steps.div_ceil(grid.max_slices.max(2) - 1).max(1);
    let mut times = vec![grid.horizon];
    let mut slices = vec![v.clone()];
    let mut next = vec![0.0; nodes];
    let nf = n as f64;
    let mut qbar = vec![0.0; d];
    for step in 1..=steps {
        for j in 0..nodes {
            let vj = v[j];
            let mut ham = 0.0;
            for i in 0..n {
                let mut diss = 0.0;
                for k in 0..d {
                    let a = i * d + k;
                    let qm = (vj - v[axis_nb[a][0][j]]) / spacing;
                    let qp = (v[axis_nb[a][1][j]] - vj) / spacing;
                    qbar[k] = 0.5 * nf * (qm + qp);
                    diss += 0.5 * theta * (qp - qm);
                }
                let xi = &states[j][i * d..(i + 1) * d];
                ham += h.value(xi, &qbar, &measures[j]) / nf - diss;
            }
            let mut lap = 0.0;
            if kappa > 0.0 {
                for nb in &diag_nb {
                    lap += v[nb[0][j]] - 2.0 * vj + v[nb[1][j]];
                }
                lap *= kappa / (spacing * spacing);
            }
            next[j] = vj - dt * ham + dt * lap;
        }
        std::mem::swap(&mut v, &mut next);
        if v.iter().any(|x| !x.is_finite()) {
            return Err(LabError::Numeric(
                "finite-difference solution diverged".into(),
            ));
        }
        if step % stride == 0 || step == steps {
            times.push(grid.horizon - step as f64 * dt);
            slices.push(v.clone());
        }
    }
    times.reverse();
    slices.reverse();
    times[0] = 0.0;
    Ok(ValueTable {
        n,
        d,
        axis,
        spacing,
        dt,
        times,
        slices,
    })
}
