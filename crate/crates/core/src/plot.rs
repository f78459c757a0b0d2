//! Minimal standalone SVG line plots on log-log axes.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLOURS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Plots each `(label, x, y)` series on log-log axes. Non-positive or
/// non-finite points are skipped.
pub fn loglog(title: &str, x_label: &str, series: &[(&str, &[f64], &[f64])]) -> String {
    let points: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|(_, x, y)| {
            x.iter()
                .zip(y.iter())
                .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
                .map(|(a, b)| (a.log10(), b.log10()))
                .collect()
        })
        .collect();
    let all = points.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !(x0 < x1) {
        (x0, x1) = (x0.min(0.0) - 0.5, x1.max(0.0) + 0.5);
    }
    if !(y0 < y1) {
        (y0, y1) = (y0.min(0.0) - 0.5, y1.max(0.0) + 0.5);
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    for e in x0.ceil() as i32..=x1.floor() as i32 {
        let x = sx(e as f64);
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{e}</text>"#, HEIGHT - MARGIN + 16.0);
    }
    for e in y0.ceil() as i32..=y1.floor() as i32 {
        let y = sy(e as f64);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">1e{e}</text>"#, MARGIN - 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, escape(x_label));
    for (n, (pts, (label, _, _))) in points.iter().zip(series).enumerate() {
        let colour = COLOURS[n % COLOURS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{colour}" points="{}"/>"#, path.join(" "));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" fill="{colour}">{}</text>"#,
            MARGIN + 8.0,
            MARGIN + 16.0 * (n + 1) as f64,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_every_series() {
        let x = [1.0, 10.0, 100.0];
        let svg = loglog("a < b", "r", &[("one", &x, &[1.0, 2.0, 3.0]), ("two", &x, &[0.0, 1.0, 5.0])]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a &lt; b"));
    }

    #[test]
    fn empty_series_still_renders() {
        let svg = loglog("empty", "r", &[("none", &[], &[])]);
        assert!(svg.contains("</svg>"));
    }
}
