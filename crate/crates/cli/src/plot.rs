//! Minimal log-log SVG of a scaling report.

use std::fmt::Write;

use crate::experiment::ScalingReport;

const W: f64 = 640.0;
const H: f64 = 440.0;
const PAD: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub fn scaling_svg(report: &ScalingReport) -> String {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for s in &report.series {
        for r in &s.rows {
            pts.push((r.n, r.constructive_mean));
            if let Some(c) = r.mean_cost {
                pts.push((r.n, c));
            }
        }
    }
    let pts: Vec<(f64, f64)> = pts.into_iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).collect();
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let lx: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-9 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo - 0.05 * (hi - lo), hi + 0.05 * (hi - lo))
        }
    };
    let (x0, x1) = span(&lx);
    let (y0, y1) = span(&ly);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let _ = writeln!(
        svg,
        r#"<path d="M{PAD} {top} L{PAD} {bot} L{right} {bot}" stroke="black" fill="none"/>"#,
        top = PAD,
        bot = H - PAD,
        right = W - PAD
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">ln N</text>"#,
        W / 2.0,
        H - 20.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="18" y="{}" font-size="13" transform="rotate(-90 18 {})" text-anchor="middle">ln cost</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (k, s) in report.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        for r in &s.rows {
            if r.constructive_mean > 0.0 {
                let _ = writeln!(
                    svg,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                    sx(r.n.ln()),
                    sy(r.constructive_mean.ln())
                );
            }
            if let Some(c) = r.mean_cost.filter(|c| *c > 0.0) {
                let (x, y) = (sx(r.n.ln()), sy(c.ln()));
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.2}" y="{:.2}" width="7" height="7" fill="none" stroke="{color}"/>"#,
                    x - 3.5,
                    y - 3.5
                );
            }
        }
        if let Some(fit) = &s.slope_fit {
            let (a, b) = (x0, x1);
            let _ = writeln!(
                svg,
                r#"<path d="M{:.2} {:.2} L{:.2} {:.2}" stroke="{color}" stroke-dasharray="5,4" fill="none"/>"#,
                sx(a),
                sy(fit.intercept + fit.slope * a),
                sx(b),
                sy(fit.intercept + fit.slope * b)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-size="12" fill="{color}">p = {}: slope {:.3}</text>"#,
                PAD + 10.0,
                PAD + 16.0 * (k as f64 + 1.0),
                s.p,
                fit.slope
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}
