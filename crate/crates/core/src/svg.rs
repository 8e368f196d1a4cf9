//! Panel figures of simulation metrics against τ², written as SVG.
//!
//! One figure per (p_C, θ); panels are laid out with K down the rows and the
//! size design across the columns. Solid lines are "only" or model-based
//! variants, dashed lines "always" or naïve ones.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::simulation::MetricsRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Bias,
    MedianBias,
    Coverage,
    MissLeft,
    MissRight,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Bias => "bias",
            Metric::MedianBias => "median_bias",
            Metric::Coverage => "coverage",
            Metric::MissLeft => "miss_left",
            Metric::MissRight => "miss_right",
        }
    }

    pub fn of(&self, row: &MetricsRow) -> Option<f64> {
        match self {
            Metric::Bias => row.bias,
            Metric::MedianBias => row.median_bias,
            Metric::Coverage => row.coverage,
            Metric::MissLeft => row.miss_left,
            Metric::MissRight => row.miss_right,
        }
    }

    /// Horizontal reference: the nominal level for coverage, α/2 for the
    /// miss rates and zero for the bias metrics.
    pub fn reference(&self, level: f64) -> f64 {
        match self {
            Metric::Bias | Metric::MedianBias => 0.0,
            Metric::Coverage => level,
            Metric::MissLeft | Metric::MissRight => 0.5 * (1.0 - level),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bias" => Ok(Metric::Bias),
            "median_bias" => Ok(Metric::MedianBias),
            "coverage" => Ok(Metric::Coverage),
            "miss_left" => Ok(Metric::MissLeft),
            "miss_right" => Ok(Metric::MissRight),
            other => Err(Error::InvalidArgument(format!(
                "unknown metric `{other}` (expected bias|median_bias|coverage|miss_left|miss_right)"
            ))),
        }
    }
}

/// A rendered figure and its suggested file name.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub file_name: String,
    pub svg: String,
}

const PANEL_W: f64 = 260.0;
const PANEL_H: f64 = 200.0;
const MARGIN: f64 = 50.0;
const LEGEND_W: f64 = 170.0;
const COLORS: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
    "#7f7f7f", "#bcbd22",
];

fn dashed(method: &str, policy: &str) -> bool {
    if method.ends_with("-naive") {
        return true;
    }
    if method.ends_with("-model") {
        return false;
    }
    policy == "always"
}

fn ordered<T: Clone + PartialEq>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for x in items {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

fn sort_f64(v: &mut [f64]) {
    v.sort_by(|a, b| a.total_cmp(b));
}

/// Builds one figure per (p_C, θ) from metrics rows.
pub fn plot(rows: &[MetricsRow], metric: Metric, level: f64) -> Result<Vec<Figure>> {
    let rows: Vec<&MetricsRow> = rows.iter().filter(|r| metric.of(r).is_some()).collect();
    if rows.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no rows carry metric `{}`",
            metric.name()
        )));
    }
    let facets: BTreeSet<(u64, u64)> = rows
        .iter()
        .map(|r| (r.p_c.to_bits(), r.theta.to_bits()))
        .collect();
    let mut facets: Vec<(f64, f64)> = facets
        .into_iter()
        .map(|(a, b)| (f64::from_bits(a), f64::from_bits(b)))
        .collect();
    facets.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let mut figures = Vec::new();
    for (p_c, theta) in facets {
        let subset: Vec<&MetricsRow> = rows
            .iter()
            .copied()
            .filter(|r| r.p_c == p_c && r.theta == theta)
            .collect();
        figures.push(Figure {
            file_name: format!("{}_pc{}_theta{}.svg", metric.name(), p_c, theta),
            svg: render(&subset, metric, level, p_c, theta),
        });
    }
    Ok(figures)
}

fn render(rows: &[&MetricsRow], metric: Metric, level: f64, p_c: f64, theta: f64) -> String {
    let mut ks: Vec<usize> = ordered(rows.iter().map(|r| r.k));
    ks.sort_unstable();
    let sizes: Vec<String> = ordered(rows.iter().map(|r| r.sizes_label.clone()));
    let series: Vec<(String, String)> =
        ordered(rows.iter().map(|r| (r.method.clone(), r.policy.clone())));

    let mut taus: Vec<f64> = rows.iter().map(|r| r.tau2).collect();
    sort_f64(&mut taus);
    let (x_min, mut x_max) = (taus[0], taus[taus.len() - 1]);
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    let reference = metric.reference(level);
    let mut ys: Vec<f64> = rows.iter().filter_map(|r| metric.of(r)).collect();
    ys.push(reference);
    sort_f64(&mut ys);
    let (mut y_min, mut y_max) = (ys[0], ys[ys.len() - 1]);
    if y_max - y_min < 1e-9 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = 0.05 * (y_max - y_min);
    y_min -= pad;
    y_max += pad;

    let width = MARGIN + sizes.len() as f64 * (PANEL_W + MARGIN) + LEGEND_W;
    let height = MARGIN + ks.len() as f64 * (PANEL_H + MARGIN);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="20" font-size="14">{} vs tau2, p_c = {p_c}, theta = {theta}</text>"#,
        MARGIN,
        metric.name()
    )
    .unwrap();

    for (row_idx, &k) in ks.iter().enumerate() {
        for (col_idx, label) in sizes.iter().enumerate() {
            let x0 = MARGIN + col_idx as f64 * (PANEL_W + MARGIN);
            let y0 = MARGIN + row_idx as f64 * (PANEL_H + MARGIN);
            let px = |x: f64| x0 + (x - x_min) / (x_max - x_min) * PANEL_W;
            let py = |y: f64| y0 + PANEL_H - (y - y_min) / (y_max - y_min) * PANEL_H;
            writeln!(s, r#"<g class="panel" data-k="{k}" data-sizes="{label}">"#).unwrap();
            writeln!(
                s,
                r##"<rect x="{x0}" y="{y0}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>"##
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{}" y="{}">K = {k}, {label}</text>"#,
                x0 + 4.0,
                y0 - 6.0
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{x0}" y="{}">{x_min}</text><text x="{}" y="{}" text-anchor="end">{x_max}</text>"#,
                y0 + PANEL_H + 14.0,
                x0 + PANEL_W,
                y0 + PANEL_H + 14.0
            )
            .unwrap();
            writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text><text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
                x0 - 4.0,
                y0 + PANEL_H,
                y_min,
                x0 - 4.0,
                y0 + 10.0,
                y_max
            )
            .unwrap();
            writeln!(
                s,
                r##"<line class="reference" x1="{x0}" y1="{y}" x2="{}" y2="{y}" stroke="#999" stroke-width="1" data-value="{reference}"/>"##,
                x0 + PANEL_W,
                y = py(reference)
            )
            .unwrap();
            for (idx, (method, policy)) in series.iter().enumerate() {
                let mut pts: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| r.k == k && &r.sizes_label == label)
                    .filter(|r| &r.method == method && &r.policy == policy)
                    .filter_map(|r| metric.of(r).map(|v| (r.tau2, v)))
                    .collect();
                if pts.is_empty() {
                    continue;
                }
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                let points: Vec<String> = pts
                    .iter()
                    .map(|(x, y)| format!("{:.2},{:.2}", px(*x), py(*y)))
                    .collect();
                let dash = if dashed(method, policy) {
                    r#" stroke-dasharray="6,4""#
                } else {
                    ""
                };
                writeln!(
                    s,
                    r#"<polyline class="series" data-method="{method}" data-policy="{policy}" points="{}" fill="none" stroke="{}" stroke-width="1.5"{dash}/>"#,
                    points.join(" "),
                    COLORS[idx % COLORS.len()]
                )
                .unwrap();
            }
            writeln!(s, "</g>").unwrap();
        }
    }

    let lx = width - LEGEND_W + 10.0;
    writeln!(s, r#"<g class="legend">"#).unwrap();
    for (idx, (method, policy)) in series.iter().enumerate() {
        let y = MARGIN + idx as f64 * 16.0;
        let dash = if dashed(method, policy) {
            r#" stroke-dasharray="6,4""#
        } else {
            ""
        };
        writeln!(
            s,
            r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="1.5"{dash}/><text x="{}" y="{}">{method} {policy}</text>"#,
            lx + 24.0,
            COLORS[idx % COLORS.len()],
            lx + 30.0,
            y + 4.0
        )
        .unwrap();
    }
    writeln!(s, "</g>").unwrap();
    writeln!(s, "</svg>").unwrap();
    s
}
