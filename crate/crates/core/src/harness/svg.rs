use std::fmt::Write;

use crate::aup::CurvePoint;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Plots accuracy against TPF for each labelled curve.
pub fn render_svg(curves: &[(&str, &[CurvePoint])]) -> String {
    let all = curves.iter().flat_map(|(_, c)| c.iter());
    let x_max = all.clone().map(|p| p.rho).fold(1.0, f64::max).ceil().max(2.0);
    let x_min = 1.0;
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - x_min) / (x_max - x_min) * plot_w;
    let sy = |y: f64| HEIGHT - MARGIN - y / 100.0 * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (x0, y0, x1, y1) = (sx(x_min), sy(0.0), sx(x_max), sy(100.0));
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" fill="none" stroke="black"/>"#
    );
    for acc in [0, 25, 50, 75, 100] {
        let y = sy(acc as f64);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{acc}</text>"#,
            x0 - 6.0,
            y + 4.0
        );
    }
    let ticks = x_max as usize;
    for t in 1..=ticks {
        let x = sx(t as f64);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#, y0 + 18.0);
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">tokens per forward</text>"#,
        WIDTH / 2.0,
        HEIGHT - 8.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">accuracy (%)</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (i, (label, points)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut sorted = points.to_vec();
        sorted.sort_by(|a, b| a.rho.total_cmp(&b.rho));
        let coords: Vec<String> = sorted
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.rho), sy(p.acc)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        for p in &sorted {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
                sx(p.rho),
                sy(p.acc)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
            x1 - 120.0,
            y1 + 16.0 * (i as f64 + 1.0),
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}
