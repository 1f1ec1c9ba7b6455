//! Minimal SVG charts.

use std::fmt::Write;

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

/// Line chart of named series over shared x labels.
pub fn line_chart(title: &str, labels: &[String], series: &[(&str, Vec<f64>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let (lo, hi) = bounds(series.iter().flat_map(|(_, v)| v.iter()));
    let n = labels.len().max(2) as f64 - 1.0;
    let x = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / n;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);
    let _ = write!(
        out,
        r#"<line x1="{MARGIN}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{b}" stroke="black"/>"#,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = write!(out, r#"<text x="5" y="{}">{hi:.3}</text><text x="5" y="{}">{lo:.3}</text>"#, MARGIN, HEIGHT - MARGIN);
    if let (Some(first), Some(last)) = (labels.first(), labels.last()) {
        let _ = write!(
            out,
            r#"<text x="{MARGIN}" y="{}">{}</text><text x="{}" y="{}" text-anchor="end">{}</text>"#,
            HEIGHT - MARGIN + 18.0,
            escape(first),
            WIDTH - MARGIN,
            HEIGHT - MARGIN + 18.0,
            escape(last)
        );
    }
    for (k, (name, values)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = values.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v))).collect();
        let _ = write!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 120.0,
            MARGIN + 15.0 * k as f64,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Vertical bar chart.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let hi = bars.iter().map(|(_, v)| *v).fold(0.0f64, f64::max).max(1e-12);
    let slot = (WIDTH - 2.0 * MARGIN) / bars.len().max(1) as f64;
    for (i, (label, v)) in bars.iter().enumerate() {
        let h = (HEIGHT - 2.0 * MARGIN - 40.0) * v / hi;
        let x0 = MARGIN + slot * i as f64 + slot * 0.1;
        let _ = write!(
            out,
            r#"<rect x="{x0:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{}"/>"#,
            HEIGHT - MARGIN - 40.0 - h,
            slot * 0.8,
            COLORS[i % COLORS.len()]
        );
        let _ = write!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v:.4}</text>"#,
            x0 + slot * 0.4,
            HEIGHT - MARGIN - 44.0 - h
        );
        let _ = write!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" transform="rotate(-30 {:.2} {:.2})">{}</text>"#,
            x0 + slot * 0.4,
            HEIGHT - MARGIN - 25.0,
            x0 + slot * 0.4,
            HEIGHT - MARGIN - 25.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
