//! Static SVG charts.

use std::fmt::Write as _;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Line<'a> {
    pub label: &'a str,
    pub values: &'a [Option<f64>],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn frame(out: &mut String, title: &str, lo: f64, hi: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let (x0, y0, x1, y1) = (MARGIN, MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r##"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="#888"/>"##, x1 - x0, y1 - y0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{:.4}</text>"#, x0 - 4.0, y0 + 4.0, hi);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{:.4}</text>"#, x0 - 4.0, y1, lo);
}

/// Line chart of one or more series over a shared index. Missing points
/// break the line.
pub fn line_chart(title: &str, lines: &[Line<'_>]) -> String {
    let n = lines.iter().map(|l| l.values.len()).max().unwrap_or(0);
    let (lo, hi) = bounds(lines.iter().flat_map(|l| l.values.iter().flatten().copied()));
    let mut out = String::new();
    frame(&mut out, title, lo, hi);
    let sx = (WIDTH - 2.0 * MARGIN) / (n.max(2) - 1) as f64;
    let sy = (HEIGHT - 2.0 * MARGIN) / (hi - lo);
    for (k, line) in lines.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut path = String::new();
        let mut pen_down = false;
        for (i, v) in line.values.iter().enumerate() {
            match v {
                Some(v) => {
                    let x = MARGIN + i as f64 * sx;
                    let y = HEIGHT - MARGIN - (v - lo) * sy;
                    let _ = write!(path, "{}{x:.2},{y:.2} ", if pen_down { "L" } else { "M" });
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1"/>"#, path.trim_end());
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 150.0,
            MARGIN + 16.0 * (k + 1) as f64,
            escape(line.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Bar chart of autocorrelations at lags 1..=len with a ±band guide.
pub fn acf_chart(title: &str, acf: &[f64], band: f64) -> String {
    let bound = acf.iter().fold(band, |m, v| m.max(v.abs())).max(1e-3);
    let (lo, hi) = (-bound, bound);
    let mut out = String::new();
    frame(&mut out, title, lo, hi);
    let sy = (HEIGHT - 2.0 * MARGIN) / (hi - lo);
    let y_of = |v: f64| HEIGHT - MARGIN - (v - lo) * sy;
    let step = (WIDTH - 2.0 * MARGIN) / (acf.len() + 1) as f64;
    for guide in [band, -band] {
        let y = y_of(guide);
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#d62728" stroke-dasharray="4 3"/>"##,
            WIDTH - MARGIN
        );
    }
    let zero = y_of(0.0);
    for (i, v) in acf.iter().enumerate() {
        let x = MARGIN + (i + 1) as f64 * step;
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{zero:.2}" x2="{x:.2}" y2="{:.2}" stroke="{}" stroke-width="3"/>"#,
            y_of(*v),
            COLORS[0]
        );
    }
    out.push_str("</svg>\n");
    out
}
