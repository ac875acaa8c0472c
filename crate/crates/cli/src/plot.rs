//! Static SVG line charts drawn from a `rows.csv`.

use std::fmt::Write as _;

use quantlab_core::{LabError, Result};

use crate::experiments::ExperimentKind;

struct Layout {
    x: &'static str,
    ys: &'static [&'static str],
    group: Option<&'static str>,
    log: bool,
}

fn layout(kind: ExperimentKind) -> Layout {
    match kind {
        ExperimentKind::QuantizationRates => Layout {
            x: "N",
            ys: &["error", "reference_rate"],
            group: Some("dim"),
            log: true,
        },
        ExperimentKind::SimultaneousTradeoff => Layout {
            x: "alpha",
            ys: &["rho_x", "rho_y"],
            group: None,
            log: false,
        },
        ExperimentKind::ExampleGap => Layout {
            x: "N",
            ys: &["gap", "lower"],
            group: Some("dim"),
            log: true,
        },
        ExperimentKind::MfcConvergence => Layout {
            x: "N",
            ys: &["gap", "lip_quotient"],
            group: None,
            log: true,
        },
        ExperimentKind::HeatProjection => Layout {
            x: "trial",
            ys: &["diff"],
            group: None,
            log: false,
        },
    }
}

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| LabError::InvalidInput(format!("rows have no `{name}` column")))
}

fn parse(field: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| LabError::InvalidInput(format!("`{field}` is not a number")))
}

/// Averages `y` over rows with equal `x` (several seeds) within each series.
/// Running sums `(x, sum_y, count)` per x value.
type Sums = Vec<(f64, f64, usize)>;

fn collect(kind: ExperimentKind, rows_csv: &str) -> Result<Vec<Series>> {
    let l = layout(kind);
    let mut reader = csv::Reader::from_reader(rows_csv.as_bytes());
    let headers = reader.headers()?.clone();
    let xi = column(&headers, l.x)?;
    let gi = l.group.map(|g| column(&headers, g)).transpose()?;
    let yis: Vec<usize> =
        l.ys.iter()
            .map(|y| column(&headers, y))
            .collect::<Result<_>>()?;
    let mut acc: Vec<(String, Sums)> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let x = parse(&rec[xi])?;
        for (yi, name) in yis.iter().zip(l.ys) {
            let label = match (gi, l.group) {
                (Some(g), Some(gname)) => format!("{name} ({gname}={})", &rec[g]),
                _ => name.to_string(),
            };
            let y = parse(&rec[*yi])?;
            let idx = match acc.iter().position(|(lab, _)| *lab == label) {
                Some(i) => i,
                None => {
                    acc.push((label, Vec::new()));
                    acc.len() - 1
                }
            };
            let pts = &mut acc[idx].1;
            match pts.iter_mut().find(|p| p.0 == x) {
                Some(p) => {
                    p.1 += y;
                    p.2 += 1;
                }
                None => pts.push((x, y, 1)),
            }
        }
    }
    Ok(acc
        .into_iter()
        .map(|(label, pts)| Series {
            label,
            points: pts.into_iter().map(|(x, s, c)| (x, s / c as f64)).collect(),
        })
        .collect())
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];
const W: f64 = 720.0;
const H: f64 = 440.0;
const PAD: f64 = 60.0;

/// Renders the standard chart for `kind`; log-log axes drop nonpositive
/// points.
pub fn render_svg(kind: ExperimentKind, rows_csv: &str) -> Result<String> {
    let l = layout(kind);
    let tf = |v: f64| if l.log { v.log10() } else { v };
    let mut series = collect(kind, rows_csv)?;
    for s in &mut series {
        s.points.retain(|&(x, y)| !l.log || (x > 0.0 && y > 0.0));
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().map(|&(x, y)| (tf(x), tf(y))))
        .collect();
    if all.is_empty() {
        return Err(LabError::InvalidInput("nothing to plot".into()));
    }
    let span = |vals: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = span(&mut all.iter().map(|p| p.0));
    let (y0, y1) = span(&mut all.iter().map(|p| p.1));
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let label = |v: f64| {
        if l.log {
            format!("{:.3e}", 10f64.powf(v))
        } else {
            format!("{v:.3}")
        }
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        kind.name()
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            sx(xv),
            H - PAD + 16.0,
            label(xv)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            PAD - 4.0,
            sy(yv) + 4.0,
            label(yv)
        );
    }
    let axis = if l.log {
        format!("{} (log)", l.x)
    } else {
        l.x.to_string()
    };
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{axis}</text>"#,
        W / 2.0,
        H - 18.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(tf(x)), sy(tf(y))))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = PAD + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="10" height="3" fill="{color}"/>"#,
            W - PAD - 170.0,
            ly - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}">{}</text>"#,
            W - PAD - 155.0,
            s.label
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
