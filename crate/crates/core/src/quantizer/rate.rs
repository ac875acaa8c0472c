use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Reference rate for quantizing a compactly supported measure in dimension
/// `d` with `n` points.
pub fn reference_rate(n: usize, d: usize) -> f64 {
    let nf = n as f64;
    match d {
        0 => 0.0,
        1 => nf.powf(-0.5),
        2 => nf.powf(-0.5) * (1.0 + nf).ln().sqrt(),
        _ => nf.powf(-1.0 / d as f64),
    }
}

/// Least-squares fit of `log error = constant + slope * log N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub constant: f64,
    pub r_squared: f64,
}

pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return invalid("a rate fit needs at least two points");
    }
    if points.iter().any(|&(n, e)| !(n > 0.0 && e > 0.0)) {
        return invalid("rate fit needs positive N and positive errors");
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(n, e)| (n.ln(), e.ln())).collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("rate fit needs at least two distinct N");
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let constant = my - slope * mx;
    let ss_tot: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = logs
        .iter()
        .map(|p| (p.1 - constant - slope * p.0).powi(2))
        .sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(RateFit {
        slope,
        constant,
        r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub error: f64,
    pub reference_rate: f64,
}

/// Error against `N` with the matching reference rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub dim: usize,
    pub rows: Vec<RateRow>,
}

impl RateTable {
    /// `N` must be strictly increasing and errors non-negative.
    pub fn new(dim: usize, entries: &[(usize, f64)]) -> Result<Self> {
        if entries.windows(2).any(|w| w[1].0 <= w[0].0) {
            return invalid("N must be strictly increasing");
        }
        if entries.iter().any(|e| !(e.1 >= 0.0)) {
            return invalid("errors must be non-negative");
        }
        let rows = entries
            .iter()
            .map(|&(n, error)| RateRow {
                n,
                error,
                reference_rate: reference_rate(n, dim),
            })
            .collect();
        Ok(Self { dim, rows })
    }

    pub fn fit(&self) -> Result<RateFit> {
        let pts: Vec<(f64, f64)> = self.rows.iter().map(|r| (r.n as f64, r.error)).collect();
        rate_fit(&pts)
    }

    /// CSV with header `N,error,reference_rate`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}
