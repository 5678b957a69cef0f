//! Minimal static SVG line plots.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

/// Line plot of every series on shared axes.
pub fn line_plot(title: &str, x_label: &str, series: &[Series<'_>]) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.x.iter()));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.y.iter()));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    for (value, y) in [(y0, HEIGHT - MARGIN), (y1, MARGIN + 10.0)] {
        let _ = writeln!(out, r#"<text x="4" y="{y}">{value:.3}</text>"#);
    }
    for (value, anchor, x) in [(x0, "start", MARGIN), (x1, "end", WIDTH - MARGIN)] {
        let _ =
            writeln!(out, r#"<text x="{x}" y="{}" text-anchor="{anchor}">{value:.3}</text>"#, HEIGHT - MARGIN + 16.0);
    }
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut points = String::new();
        for (&x, &y) in s.x.iter().zip(s.y) {
            if x.is_finite() && y.is_finite() {
                let _ = write!(points, "{:.2},{:.2} ", sx(x), sy(y));
            }
        }
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{points}"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            MARGIN + 8.0,
            MARGIN + 16.0 + 14.0 * k as f64,
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
