//! Minimal SVG output: a horizontal bar chart and a line chart with a
//! shaded band.

use std::fmt::Write;

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Horizontal bars, largest first as given.
pub fn bar_chart_svg(title: &str, bars: &[(&str, f64)]) -> String {
    let (w, row, left, top) = (720.0, 22.0, 240.0, 40.0);
    let h = top + row * bars.len() as f64 + 20.0;
    let max = bars.iter().map(|b| b.1).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let span = w - left - 80.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="10" y="20" font-size="14">{}</text>"#, escape(title));
    for (i, (label, v)) in bars.iter().enumerate() {
        let y = top + i as f64 * row;
        let bw = (v / max * span).max(0.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, y + 14.0, escape(label));
        let _ = writeln!(s, r#"<rect x="{left}" y="{:.1}" width="{bw:.2}" height="{:.1}" fill="{}"/>"#, y + 3.0, row - 6.0, PALETTE[0]);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{v:.4}</text>"#, left + bw + 4.0, y + 14.0);
    }
    s.push_str("</svg>\n");
    s
}

/// One series of a line chart.
pub struct Series<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

/// Lines over shared x labels, with an optional `(lower, upper)` band drawn
/// behind them.
pub fn line_chart_svg(title: &str, x_labels: &[String], band: Option<(&[f64], &[f64])>, series: &[Series<'_>]) -> String {
    let (w, h, left, right, top, bottom) = (900.0, 420.0, 60.0, 180.0, 40.0, 50.0);
    let n = x_labels.len().max(1);
    let mut all: Vec<f64> = series.iter().flat_map(|s| s.values.iter().copied()).collect();
    if let Some((lo, hi)) = band {
        all.extend(lo);
        all.extend(hi);
    }
    let ymin = all.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let mut ymax = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !ymax.is_finite() || ymax <= ymin {
        ymax = ymin + 1.0;
    }
    let px = |i: usize| left + (w - left - right) * if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    let py = |v: f64| top + (h - top - bottom) * (1.0 - (v - ymin) / (ymax - ymin));
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="10" y="20" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(s, r##"<line x1="{left}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#333"/>"##, h - bottom, w - right, h - bottom);
    let _ = writeln!(s, r##"<line x1="{left}" y1="{top}" x2="{left}" y2="{:.1}" stroke="#333"/>"##, h - bottom);
    for k in 0..=4 {
        let v = ymin + (ymax - ymin) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#, left - 4.0, py(v) + 4.0);
    }
    let step = n.div_ceil(10).max(1);
    for (i, l) in x_labels.iter().enumerate().step_by(step) {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="10">{}</text>"#, px(i), h - bottom + 16.0, escape(l));
    }
    if let Some((lo, hi)) = band {
        let mut pts: Vec<String> = hi.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", px(i), py(v))).collect();
        pts.extend(lo.iter().enumerate().rev().map(|(i, &v)| format!("{:.2},{:.2}", px(i), py(v))));
        let _ = writeln!(s, r##"<polygon points="{}" fill="#bbbbbb" fill-opacity="0.5"/>"##, pts.join(" "));
    }
    for (j, ser) in series.iter().enumerate() {
        let color = PALETTE[j % PALETTE.len()];
        let pts: Vec<String> = ser.values.iter().enumerate().map(|(i, &v)| format!("{:.2},{:.2}", px(i), py(v))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, pts.join(" "));
        let ly = top + 16.0 * j as f64;
        let _ = writeln!(s, r#"<rect x="{:.1}" y="{:.1}" width="12" height="3" fill="{color}"/>"#, w - right + 10.0, ly);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, w - right + 28.0, ly + 5.0, escape(ser.name));
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bar_chart_has_one_rect_per_bar() {
        let svg = bar_chart_svg("top <3>", &[("a", 0.5), ("b&c", 0.25)]);
        assert_eq!(svg.matches("<rect").count(), 2);
        assert!(svg.contains("top &lt;3&gt;"));
        assert!(svg.contains("b&amp;c"));
    }

    #[test]
    fn line_chart_has_band_and_series() {
        let x: Vec<String> = (1..=5).map(|i| format!("W{i}")).collect();
        let lo = [0.0, 1.0, 1.0, 2.0, 2.0];
        let hi = [2.0, 3.0, 3.0, 4.0, 4.0];
        let svg = line_chart_svg("t", &x, Some((&lo, &hi)), &[Series { name: "m", values: &[1.0, 2.0, 2.0, 3.0, 3.0] }]);
        assert_eq!(svg.matches("<polygon").count(), 1);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.ends_with("</svg>\n"));
    }
}
