//! Exact balanced assignment.
//!
//! Rows (atoms, samples, particles) are assigned to columns (centroids,
//! target points) so that every column receives exactly `capacity` rows and
//! the summed cost is minimal. With `capacity == 1` this is the classical
//! linear assignment problem; larger capacities are equivalent to solving
//! the assignment problem on a matrix whose columns are replicated
//! `capacity` times, without materializing the replicas.
//!
//! The solver is a successive-shortest-path method over the column nodes.
//! Moving a row from column `a` to column `b` costs `c[r][b] - c[r][a]`, and
//! Dijkstra runs on those exchange arcs with reduced costs kept nonnegative
//! by column potentials. Each inserted row triggers one Dijkstra pass that
//! ends at the first column with spare capacity.

use crate::error::{invalid, LabError, Result};

/// Default largest problem accepted by the exact kernel.
pub const DEFAULT_MAX_SIZE: usize = 4096;

const NONE: usize = usize::MAX;

/// Column count up to which exchange-arc minima are cached per column pair.
const CACHE_COLS: usize = 1024;

/// Result of a balanced assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancedAssignment {
    /// Column receiving each row.
    pub owner: Vec<usize>,
    /// Sum of the selected costs.
    pub total_cost: f64,
}

impl BalancedAssignment {
    /// Rows owned by each column, in increasing row order.
    pub fn members(&self, cols: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); cols];
        for (r, &c) in self.owner.iter().enumerate() {
            out[c].push(r);
        }
        out
    }
}

fn check_shape(cost: &[f64], rows: usize, cols: usize, capacity: usize) -> Result<()> {
    if cols == 0 || capacity == 0 {
        return invalid("assignment needs at least one column and positive capacity");
    }
    if rows != cols * capacity {
        return invalid(format!(
            "unbalanced assignment: {rows} rows vs {cols} columns x capacity {capacity}"
        ));
    }
    if cost.len() != rows * cols {
        return invalid(format!(
            "cost matrix has {} entries, expected {}",
            cost.len(),
            rows * cols
        ));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return invalid("cost matrix contains non-finite entries");
    }
    Ok(())
}

fn total(cost: &[f64], cols: usize, owner: &[usize]) -> f64 {
    owner
        .iter()
        .enumerate()
        .map(|(r, &c)| cost[r * cols + c])
        .sum()
}

/// Exact minimum-cost balanced assignment.
///
/// `cost` is row-major with shape `rows x cols` and `rows` must equal
/// `cols * capacity`. Ties are resolved towards lower column indices, so the
/// output is a deterministic function of the input.
pub fn solve_balanced(
    cost: &[f64],
    rows: usize,
    cols: usize,
    capacity: usize,
) -> Result<BalancedAssignment> {
    check_shape(cost, rows, cols, capacity)?;
    let mut ssp = Ssp::new(cost, cols, capacity, rows);
    for r in 0..rows {
        ssp.insert(r)?;
    }
    let owner = ssp.owner;
    let total_cost = total(cost, cols, &owner);
    Ok(BalancedAssignment { owner, total_cost })
}

/// Square assignment: returns the permutation `sigma` with row `i` matched
/// to column `sigma[i]`.
pub fn solve_square(cost: &[f64], n: usize, max_size: usize) -> Result<BalancedAssignment> {
    if n > max_size {
        return Err(LabError::Resource(format!(
            "assignment of size {n} exceeds the configured cap {max_size}"
        )));
    }
    solve_balanced(cost, n, n, 1)
}

struct Ssp<'a> {
    cost: &'a [f64],
    cols: usize,
    capacity: usize,
    owner: Vec<usize>,
    members: Vec<Vec<usize>>,
    slot: Vec<usize>,
    phi: Vec<f64>,
    cached: bool,
    row_min: Vec<f64>,
    row_arg: Vec<usize>,
    dist: Vec<f64>,
    pred: Vec<usize>,
    via: Vec<usize>,
    done: Vec<bool>,
    popped: Vec<usize>,
}

impl<'a> Ssp<'a> {
    fn new(cost: &'a [f64], cols: usize, capacity: usize, rows: usize) -> Self {
        let cached = capacity > 1 && cols <= CACHE_COLS;
        let cache_len = if cached { cols * cols } else { 0 };
        Self {
            cost,
            cols,
            capacity,
            owner: vec![NONE; rows],
            members: vec![Vec::with_capacity(capacity); cols],
            slot: vec![NONE; rows],
            phi: vec![0.0; cols],
            cached,
            row_min: vec![f64::INFINITY; cache_len],
            row_arg: vec![NONE; cache_len],
            dist: vec![0.0; cols],
            pred: vec![NONE; cols],
            via: vec![NONE; cols],
            done: vec![false; cols],
            popped: Vec::with_capacity(cols),
        }
    }

    #[inline]
    fn c(&self, r: usize, col: usize) -> f64 {
        self.cost[r * self.cols + col]
    }

    fn insert(&mut self, s: usize) -> Result<()> {
        let cols = self.cols;
        self.popped.clear();
        for l in 0..cols {
            self.dist[l] = self.c(s, l) - self.phi[l];
            self.pred[l] = NONE;
            self.via[l] = s;
            self.done[l] = false;
        }
        let last = loop {
            let mut j = NONE;
            let mut best = f64::INFINITY;
            for l in 0..cols {
                if !self.done[l] && self.dist[l] < best {
                    best = self.dist[l];
                    j = l;
                }
            }
            if j == NONE {
                return Err(LabError::Numeric(
                    "shortest-path search found no column with spare capacity".into(),
                ));
            }
            self.done[j] = true;
            self.popped.push(j);
            if self.members[j].len() < self.capacity {
                break j;
            }
            self.relax(j);
        };

        let d_last = self.dist[last];
        for &l in &self.popped {
            self.phi[l] += self.dist[l] - d_last;
        }

        let mut cur = last;
        loop {
            let r = self.via[cur];
            let prev = self.pred[cur];
            if prev != NONE {
                self.detach(r);
            }
            self.attach(r, cur);
            if self.cached {
                self.refresh_row(cur);
            }
            if prev == NONE {
                break;
            }
            cur = prev;
        }
        Ok(())
    }

    fn relax(&mut self, j: usize) {
        let cols = self.cols;
        let base = self.dist[j] + self.phi[j];
        if self.cached {
            let row = &self.row_min[j * cols..(j + 1) * cols];
            let arg = &self.row_arg[j * cols..(j + 1) * cols];
            for l in 0..cols {
                if self.done[l] {
                    continue;
                }
                let nd = base + row[l] - self.phi[l];
                if nd < self.dist[l] {
                    self.dist[l] = nd;
                    self.pred[l] = j;
                    self.via[l] = arg[l];
                }
            }
        } else {
            for idx in 0..self.members[j].len() {
                let r = self.members[j][idx];
                let off = base - self.c(r, j);
                let row = &self.cost[r * cols..(r + 1) * cols];
                for l in 0..cols {
                    if self.done[l] {
                        continue;
                    }
                    let nd = off + row[l] - self.phi[l];
                    if nd < self.dist[l] {
                        self.dist[l] = nd;
                        self.pred[l] = j;
                        self.via[l] = r;
                    }
                }
            }
        }
    }

    fn detach(&mut self, r: usize) {
        let col = self.owner[r];
        let pos = self.slot[r];
        let list = &mut self.members[col];
        list.swap_remove(pos);
        if pos < list.len() {
            let moved = list[pos];
            self.slot[moved] = pos;
        }
        self.owner[r] = NONE;
        self.slot[r] = NONE;
    }

    fn attach(&mut self, r: usize, col: usize) {
        self.slot[r] = self.members[col].len();
        self.members[col].push(r);
        self.owner[r] = col;
    }

    fn refresh_row(&mut self, j: usize) {
        let cols = self.cols;
        let (row_min, row_arg) = (
            &mut self.row_min[j * cols..(j + 1) * cols],
            &mut self.row_arg[j * cols..(j + 1) * cols],
        );
        row_min.fill(f64::INFINITY);
        row_arg.fill(NONE);
        for &r in &self.members[j] {
            let row = &self.cost[r * cols..(r + 1) * cols];
            let own = row[j];
            for l in 0..cols {
                let v = row[l] - own;
                if v < row_min[l] {
                    row_min[l] = v;
                    row_arg[l] = r;
                }
            }
        }
    }
}

/// Capacity-respecting greedy assignment followed by pairwise-swap
/// refinement. Used when the exact kernel would be too expensive; the
/// result is feasible but not guaranteed optimal.
pub fn greedy_balanced(
    cost: &[f64],
    rows: usize,
    cols: usize,
    capacity: usize,
    max_passes: usize,
) -> Result<BalancedAssignment> {
    check_shape(cost, rows, cols, capacity)?;
    let row = |r: usize| &cost[r * cols..(r + 1) * cols];

    // rows with the largest regret (second best minus best) choose first
    let mut order: Vec<(f64, usize)> = (0..rows)
        .map(|r| {
            let (mut b1, mut b2) = (f64::INFINITY, f64::INFINITY);
            for &v in row(r) {
                if v < b1 {
                    b2 = b1;
                    b1 = v;
                } else if v < b2 {
                    b2 = v;
                }
            }
            let regret = if b2.is_finite() { b2 - b1 } else { 0.0 };
            (regret, r)
        })
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let mut load = vec![0usize; cols];
    let mut owner = vec![NONE; rows];
    for &(_, r) in &order {
        let mut best = NONE;
        let mut best_c = f64::INFINITY;
        for (l, &v) in row(r).iter().enumerate() {
            if load[l] < capacity && v < best_c {
                best_c = v;
                best = l;
            }
        }
        owner[r] = best;
        load[best] += 1;
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::with_capacity(capacity); cols];
    for (r, &c) in owner.iter().enumerate() {
        members[c].push(r);
    }

    for _ in 0..max_passes {
        let mut improved = false;
        for r in 0..rows {
            let a = owner[r];
            let cr = row(r);
            let mut best_gain = 1e-15;
            let mut best_move = None;
            for b in 0..cols {
                if b == a || cr[b] >= cr[a] {
                    continue;
                }
                let head = cr[a] - cr[b];
                for (pos, &q) in members[b].iter().enumerate() {
                    let cq = row(q);
                    let gain = head + cq[b] - cq[a];
                    if gain > best_gain {
                        best_gain = gain;
                        best_move = Some((b, pos, q));
                    }
                }
            }
            if let Some((b, pos, q)) = best_move {
                let pr = members[a].iter().position(|&x| x == r).expect("row listed");
                members[a][pr] = q;
                members[b][pos] = r;
                owner[r] = b;
                owner[q] = a;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }

    let total_cost = total(cost, cols, &owner);
    Ok(BalancedAssignment { owner, total_cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force_square(cost: &[f64], n: usize) -> f64 {
        fn rec(cost: &[f64], n: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == n {
                *best = best.min(acc);
                return;
            }
            for c in 0..n {
                if !used[c] {
                    used[c] = true;
                    rec(cost, n, row + 1, used, acc + cost[row * n + c], best);
                    used[c] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, n, 0, &mut vec![false; n], 0.0, &mut best);
        best
    }

    /// Expands replicated columns so the brute-force oracle can run.
    fn replicate(cost: &[f64], rows: usize, cols: usize, cap: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows * rows);
        for r in 0..rows {
            for c in 0..cols {
                for _ in 0..cap {
                    out.push(cost[r * cols + c]);
                }
            }
        }
        out
    }

    #[test]
    fn square_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=7 {
            for _ in 0..20 {
                let cost: Vec<f64> = (0..n * n).map(|_| rng.random::<f64>()).collect();
                let sol = solve_balanced(&cost, n, n, 1).unwrap();
                let bf = brute_force_square(&cost, n);
                assert!((sol.total_cost - bf).abs() < 1e-12, "n={n}");
                let mut seen = sol.owner.clone();
                seen.sort();
                assert_eq!(seen, (0..n).collect::<Vec<_>>());
            }
        }
    }

    #[test]
    fn capacitated_matches_replicated_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for (cols, cap) in [(2, 2), (2, 3), (3, 2), (1, 5)] {
            let rows = cols * cap;
            for _ in 0..20 {
                let cost: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
                let sol = solve_balanced(&cost, rows, cols, cap).unwrap();
                let bf = brute_force_square(&replicate(&cost, rows, cols, cap), rows);
                assert!((sol.total_cost - bf).abs() < 1e-12);
                let mut load = vec![0; cols];
                sol.owner.iter().for_each(|&c| load[c] += 1);
                assert!(load.iter().all(|&l| l == cap));
            }
        }
    }

    #[test]
    fn cached_and_direct_modes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (cols, cap) = (40, 3);
        let rows = cols * cap;
        let cost: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
        let exact = solve_balanced(&cost, rows, cols, cap).unwrap();
        let mut direct = Ssp::new(&cost, cols, cap, rows);
        direct.cached = false;
        for r in 0..rows {
            direct.insert(r).unwrap();
        }
        let direct_total = total(&cost, cols, &direct.owner);
        assert!((exact.total_cost - direct_total).abs() < 1e-10);
        let greedy = greedy_balanced(&cost, rows, cols, cap, 10).unwrap();
        assert!(exact.total_cost <= greedy.total_cost + 1e-12);
    }

    #[test]
    fn greedy_is_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (cols, cap) = (7, 4);
        let rows = cols * cap;
        let cost: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
        let g = greedy_balanced(&cost, rows, cols, cap, 20).unwrap();
        let mut load = vec![0; cols];
        g.owner.iter().for_each(|&c| load[c] += 1);
        assert!(load.iter().all(|&l| l == cap));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(solve_balanced(&[0.0; 6], 3, 2, 1).is_err());
        assert!(solve_balanced(&[f64::NAN; 4], 2, 2, 1).is_err());
        assert!(matches!(
            solve_square(&[0.0; 9], 3, 2),
            Err(LabError::Resource(_))
        ));
    }
}
