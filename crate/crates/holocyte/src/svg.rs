//! Minimal SVG scatter plot of two score columns, colored by class.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn span(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || hi - lo < 1e-12 {
        let c = if lo.is_finite() { lo } else { 0.0 };
        (c - 1.0, c + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// One `<circle>` per point; the legend uses `<rect>` swatches.
pub fn scatter(xs: &[f64], ys: &[f64], labels: &[String], title: &str) -> String {
    let mut classes: Vec<&String> = labels.iter().collect();
    classes.sort();
    classes.dedup();
    let color = |l: &String| PALETTE[classes.binary_search(&l).unwrap() % PALETTE.len()];
    let (x0, x1) = span(xs);
    let (y0, y1) = span(ys);
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{m} {b} H{r} M{m} {b} V{m}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">PC1</text>"#,
        WIDTH / 2.0,
        HEIGHT - 18.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 18 {})">PC2</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for ((&x, &y), l) in xs.iter().zip(ys).zip(labels) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}" fill-opacity="0.75"/>"#,
            px(x),
            py(y),
            color(l)
        );
    }
    for (i, l) in classes.iter().enumerate() {
        let y = MARGIN + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#,
            WIDTH - MARGIN - 150.0,
            y - 9.0,
            color(l),
            WIDTH - MARGIN - 134.0,
            y,
            escape(l)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_circle_per_point() {
        let labels: Vec<String> = ["a", "b", "a", "c<"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let doc = scatter(&[0.0, 1.0, 2.0, 3.0], &[1.0, 1.0, 1.0, 1.0], &labels, "t");
        assert_eq!(doc.matches("<circle").count(), 4);
        assert!(doc.contains("c&lt;"));
        assert!(doc.ends_with("</svg>\n"));
    }
}
