//! Minimal self-contained SVG line plots of MSD in dB.

use std::fmt::Write as _;
use std::path::Path;

use crate::runner::RunResult;
use crate::ExperimentError;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_Y: f64 = 40.0;
const MAX_POINTS: usize = 1000;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Renders one polyline per `(label, values)` pair with a `10·log10` y-axis.
pub fn render_svg(title: &str, series: &[(String, Vec<f64>)]) -> Result<String, ExperimentError> {
    if series.is_empty() || series.iter().any(|(_, v)| v.len() < 2) {
        return Err(ExperimentError::Validation("plot needs at least one series with two or more points".into()));
    }
    let to_db: Vec<Vec<f64>> = series
        .iter()
        .map(|(_, v)| v.iter().map(|x| 10.0 * x.max(f64::MIN_POSITIVE).log10()).collect())
        .collect();
    let finite = to_db.iter().flatten().copied().filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        lo = -1.0;
        hi = 1.0;
    }
    let pad = ((hi - lo) * 0.05).max(1.0);
    lo -= pad;
    hi += pad;
    let xmax = series.iter().map(|(_, v)| v.len() - 1).max().unwrap_or(1).max(1) as f64;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - 2.0 * MARGIN_Y;
    let sx = |i: f64| MARGIN_LEFT + plot_w * i / xmax;
    let sy = |v: f64| MARGIN_Y + plot_h * (hi - v.clamp(lo, hi)) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, MARGIN_LEFT + plot_w / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_Y}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for t in 0..=4 {
        let v = lo + (hi - lo) * t as f64 / 4.0;
        let y = sy(v);
        let _ = writeln!(svg, r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, MARGIN_LEFT + plot_w);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.1}</text>"#, MARGIN_LEFT - 6.0, y + 4.0);
        let i = xmax * t as f64 / 4.0;
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{i:.0}</text>"#, sx(i), HEIGHT - MARGIN_Y + 16.0);
    }
    let _ = writeln!(svg, r#"<text x="16" y="{:.2}" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {:.2})" text-anchor="middle">MSD (dB)</text>"#, MARGIN_Y + plot_h / 2.0, MARGIN_Y + plot_h / 2.0);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">iteration</text>"#, MARGIN_LEFT + plot_w / 2.0, HEIGHT - 6.0);

    for (j, ((label, _), ys)) in series.iter().zip(&to_db).enumerate() {
        let color = COLORS[j % COLORS.len()];
        let stride = ys.len().div_ceil(MAX_POINTS).max(1);
        let mut pts = String::new();
        for (i, v) in ys.iter().enumerate() {
            if (i % stride == 0 || i + 1 == ys.len()) && v.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(i as f64), sy(*v));
            }
        }
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.trim_end());
        let ly = MARGIN_Y + 16.0 + 20.0 * j as f64;
        let lx = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 24.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{}</text>"#, lx + 30.0, ly + 4.0, escape(label));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the mean-MSD curves of every series.
pub fn emit_plot(result: &RunResult, path: &Path) -> Result<(), ExperimentError> {
    let series: Vec<(String, Vec<f64>)> =
        result.series.iter().map(|s| (s.label.clone(), s.mean.iter().map(|m| m.msd).collect())).collect();
    let svg = render_svg(&result.config.name, &series)?;
    std::fs::write(path, svg).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))
}
