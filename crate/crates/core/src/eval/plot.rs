//! Minimal deterministic SVG charts: stacked line panels and a bar chart.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const PANEL_HEIGHT: f64 = 220.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn header(out: &mut String, height: f64, title: &str) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
}

/// Value range padded so flat series still get a visible band.
fn y_range(values: &[f64]) -> (f64, f64) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return (0.0, 1.0);
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = if hi > lo {
        (hi - lo) * 0.1
    } else {
        lo.abs().max(1.0) * 0.1
    };
    (lo - pad, hi + pad)
}

fn x_positions(n: usize) -> Vec<f64> {
    let span = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    (0..n)
        .map(|i| MARGIN_LEFT + span * (i as f64 + 0.5) / n as f64)
        .collect()
}

/// One panel per series, sharing categorical x ticks.
pub fn line_chart(title: &str, x_label: &str, ticks: &[String], series: &[Series]) -> String {
    let height = MARGIN_TOP + series.len() as f64 * (PANEL_HEIGHT + MARGIN_BOTTOM);
    let mut out = String::new();
    header(&mut out, height, title);
    let xs = x_positions(ticks.len());
    for (k, s) in series.iter().enumerate() {
        let top = MARGIN_TOP + k as f64 * (PANEL_HEIGHT + MARGIN_BOTTOM);
        let bottom = top + PANEL_HEIGHT;
        let (lo, hi) = y_range(&s.values);
        let y = |v: f64| bottom - (v - lo) / (hi - lo) * PANEL_HEIGHT;
        let color = COLORS[k % COLORS.len()];
        writeln!(
            out,
            r##"<rect x="{MARGIN_LEFT}" y="{top}" width="{}" height="{PANEL_HEIGHT}" fill="none" stroke="#444"/>"##,
            WIDTH - MARGIN_LEFT - MARGIN_RIGHT
        )
        .unwrap();
        for frac in [0.0, 0.5, 1.0] {
            let v = lo + (hi - lo) * frac;
            writeln!(
                out,
                r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.4}</text>"#,
                MARGIN_LEFT - 6.0,
                y(v) + 4.0
            )
            .unwrap();
        }
        writeln!(
            out,
            r#"<text x="15" y="{:.1}" transform="rotate(-90 15 {:.1})" text-anchor="middle">{}</text>"#,
            top + PANEL_HEIGHT / 2.0,
            top + PANEL_HEIGHT / 2.0,
            escape(&s.name)
        )
        .unwrap();
        let points: Vec<String> = xs
            .iter()
            .zip(&s.values)
            .filter(|(_, v)| v.is_finite())
            .map(|(x, v)| format!("{x:.1},{:.1}", y(*v)))
            .collect();
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        )
        .unwrap();
        for p in &points {
            let (px, py) = p.split_once(',').expect("point");
            writeln!(out, r#"<circle cx="{px}" cy="{py}" r="3" fill="{color}"/>"#).unwrap();
        }
        for (x, t) in xs.iter().zip(ticks) {
            writeln!(
                out,
                r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                bottom + 16.0,
                escape(t)
            )
            .unwrap();
        }
        writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            bottom + 34.0,
            escape(x_label)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Vertical bars from zero; values are expected to be non-negative.
pub fn bar_chart(title: &str, y_label: &str, labels: &[String], values: &[f64]) -> String {
    let height = MARGIN_TOP + PANEL_HEIGHT + MARGIN_BOTTOM;
    let mut out = String::new();
    header(&mut out, height, title);
    let bottom = MARGIN_TOP + PANEL_HEIGHT;
    let hi = values
        .iter()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max)
        .max(1e-12)
        * 1.1;
    let xs = x_positions(labels.len());
    let bar_w = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / labels.len().max(1) as f64 * 0.6;
    writeln!(
        out,
        r##"<line x1="{MARGIN_LEFT}" y1="{bottom}" x2="{}" y2="{bottom}" stroke="#444"/>"##,
        WIDTH - MARGIN_RIGHT
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="15" y="{:.1}" transform="rotate(-90 15 {:.1})" text-anchor="middle">{}</text>"#,
        MARGIN_TOP + PANEL_HEIGHT / 2.0,
        MARGIN_TOP + PANEL_HEIGHT / 2.0,
        escape(y_label)
    )
    .unwrap();
    for (i, ((x, label), v)) in xs.iter().zip(labels).zip(values).enumerate() {
        let v = if v.is_finite() { v.max(0.0) } else { 0.0 };
        let h = v / hi * PANEL_HEIGHT;
        writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="{bar_w:.1}" height="{h:.1}" fill="{}"/>"#,
            x - bar_w / 2.0,
            bottom - h,
            COLORS[i % COLORS.len()]
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{v:.4}</text>"#,
            bottom - h - 4.0
        )
        .unwrap();
        writeln!(
            out,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            bottom + 16.0,
            escape(label)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}
