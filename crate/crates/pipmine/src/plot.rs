//! Minimal SVG line charts for metric series. Output depends only on the
//! input values, so re-rendering the same CSV gives the same bytes.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

/// One point of a metric series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub step: usize,
    pub mean: f64,
    pub std: f64,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Mean line with a mean ± std band on a fixed `[0, 1]` y axis.
pub fn metric_svg(title: &str, points: &[BandPoint]) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        svg,
        r#"<path d="M{x0:.2} {y1:.2} L{x0:.2} {y0:.2} L{x1:.2} {y0:.2}" fill="none" stroke="black"/>"#
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = y0 + (y1 - y0) * v;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.2}</text>"#,
            x0 - 6.0,
            y + 4.0
        );
    }
    if let (Some(first), Some(last)) = (points.first(), points.last()) {
        let (s0, s1) = (first.step as f64, last.step as f64);
        let span = if s1 > s0 { s1 - s0 } else { 1.0 };
        let px = |step: usize| {
            if points.len() == 1 {
                (x0 + x1) / 2.0
            } else {
                x0 + (x1 - x0) * (step as f64 - s0) / span
            }
        };
        let py = |v: f64| y0 + (y1 - y0) * v.clamp(0.0, 1.0);
        let mut band = String::new();
        for p in points {
            let _ = write!(band, "{:.2},{:.2} ", px(p.step), py(p.mean + p.std));
        }
        for p in points.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", px(p.step), py(p.mean - p.std));
        }
        let _ = writeln!(
            svg,
            r##"<polygon points="{}" fill="#4477aa" fill-opacity="0.25" stroke="none"/>"##,
            band.trim_end()
        );
        let line: Vec<String> = points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.step), py(p.mean)))
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#4477aa" stroke-width="2"/>"##,
            line.join(" ")
        );
        for (step, anchor) in [(first.step, "start"), (last.step, "end")] {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{step}</text>"#,
                px(step),
                y0 + 18.0
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">step</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 10.0
    );
    svg.push_str("</svg>\n");
    svg
}
