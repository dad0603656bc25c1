//! Minimal SVG emitters for bar charts and scatter plots.

use std::fmt::Write;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Categorical palette.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Blue-to-red ramp for `t` in `[0, 1]`.
pub fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let r = (40.0 + 215.0 * t) as u8;
    let b = (255.0 - 215.0 * t) as u8;
    format!("#{r:02x}40{b:02x}")
}

/// Horizontal bars, one group per series, sharing one set of labels.
pub fn bar_chart(title: &str, labels: &[String], series: &[(String, Vec<f64>)]) -> String {
    let bar_h = 10.0;
    let group_h = bar_h * series.len() as f64 + 6.0;
    let (left, width) = (190.0, 360.0);
    let height = 60.0 + group_h * labels.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="10">"#,
        left + width + 20.0
    );
    let _ = writeln!(s, r#"<text x="10" y="16" font-size="13">{}</text>"#, escape(title));
    for (k, (name, _)) in series.iter().enumerate() {
        let x = left + 120.0 * k as f64;
        let _ = writeln!(s, r#"<rect x="{x}" y="24" width="10" height="10" fill="{}"/>"#, PALETTE[k % PALETTE.len()]);
        let _ = writeln!(s, r#"<text x="{}" y="33">{}</text>"#, x + 14.0, escape(name));
    }
    for (i, label) in labels.iter().enumerate() {
        let y0 = 44.0 + group_h * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6.0,
            y0 + group_h / 2.0,
            escape(label)
        );
        for (k, (_, values)) in series.iter().enumerate() {
            let v = values.get(i).copied().unwrap_or(0.0);
            let w = if v.is_finite() { (v.clamp(0.0, 1.0) * width).max(0.0) } else { 0.0 };
            let _ = writeln!(
                s,
                r#"<rect x="{left}" y="{}" width="{w:.2}" height="{}" fill="{}"/>"#,
                y0 + bar_h * k as f64,
                bar_h - 1.0,
                PALETTE[k % PALETTE.len()]
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Scatter plot of `(x, y, color)` points scaled to the canvas.
pub fn scatter(title: &str, points: &[(f64, f64, String)], legend: &[(String, String)]) -> String {
    let (w, h, pad) = (520.0, 520.0, 30.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y, _) in points {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    let sx = if x1 > x0 { (w - 2.0 * pad) / (x1 - x0) } else { 1.0 };
    let sy = if y1 > y0 { (h - 2.0 * pad) / (y1 - y0) } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{h}" font-family="sans-serif" font-size="10">"#,
        w + 150.0
    );
    let _ = writeln!(s, r#"<text x="10" y="16" font-size="13">{}</text>"#, escape(title));
    for (x, y, c) in points {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{c}" fill-opacity="0.8"/>"#,
            pad + (x - x0) * sx,
            h - pad - (y - y0) * sy
        );
    }
    for (i, (name, color)) in legend.iter().enumerate() {
        let y = 30.0 + 14.0 * i as f64;
        let _ = writeln!(s, r#"<rect x="{}" y="{y}" width="10" height="10" fill="{color}"/>"#, w + 10.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, w + 24.0, y + 9.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}
