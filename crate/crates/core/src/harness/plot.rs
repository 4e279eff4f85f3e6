use std::fmt::Write;

use super::summary::SummaryRow;
use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 140.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;
const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

/// Method name of the gold-versus-gold rows.
pub const CONTROL: &str = "control";

/// SVG line chart of median cross-match count against checkpoint (log
/// scale), with the interquartile band per method and the threshold line.
pub fn svg_chart(summary: &[SummaryRow], threshold: usize) -> Result<String> {
    let points: Vec<&SummaryRow> =
        summary.iter().filter(|r| r.method != CONTROL && r.median.is_some() && r.checkpoint_seconds > 0.0).collect();
    if points.is_empty() {
        return Err(Error::InvalidInput("nothing to plot: no scored checkpoints".into()));
    }
    let (x_min, x_max) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.checkpoint_seconds.log10()), hi.max(r.checkpoint_seconds.log10()))
    });
    let (x_min, x_max) = if x_max - x_min < 1e-9 { (x_min - 0.5, x_max + 0.5) } else { (x_min, x_max) };
    let controls: Vec<f64> = summary.iter().filter(|r| r.method == CONTROL).filter_map(|r| r.median).collect();
    let values = points.iter().flat_map(|r| [r.q25, r.q75, r.median]).flatten().chain(controls.iter().copied());
    let (y_lo, y_hi) = values.fold((threshold as f64, threshold as f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let pad = ((y_hi - y_lo) * 0.08).max(5.0);
    let (y_min, y_max) = ((y_lo - pad).max(0.0), y_hi + pad);

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |t: f64| MARGIN_LEFT + (t.log10() - x_min) / (x_max - x_min) * plot_w;
    let sy = |v: f64| MARGIN_TOP + (1.0 - (v - y_min) / (y_max - y_min)) * plot_h;

    let mut svg = String::new();
    let w = &mut svg;
    let title = format!("{}: cross-match count vs. gold standard", points[0].experiment);
    // writing to a String cannot fail
    let _ = writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(w, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{title}</text>"#, MARGIN_LEFT + plot_w / 2.0);
    let _ = writeln!(
        w,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );

    let mut checkpoints: Vec<f64> = points.iter().map(|r| r.checkpoint_seconds).collect();
    checkpoints.sort_by(f64::total_cmp);
    checkpoints.dedup();
    for t in &checkpoints {
        let x = sx(*t);
        let _ = writeln!(w, r#"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/>"#, MARGIN_TOP + plot_h, MARGIN_TOP + plot_h + 5.0);
        let _ = writeln!(w, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#, MARGIN_TOP + plot_h + 19.0);
    }
    for k in 0..=5 {
        let v = y_min + (y_max - y_min) * k as f64 / 5.0;
        let y = sy(v);
        let _ = writeln!(w, r#"<line x1="{:.1}" y1="{y:.1}" x2="{MARGIN_LEFT}" y2="{y:.1}" stroke="black"/>"#, MARGIN_LEFT - 5.0);
        let _ = writeln!(w, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.0}</text>"#, MARGIN_LEFT - 8.0, y + 4.0);
    }
    let _ = writeln!(w, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">checkpoint (log scale)</text>"#, MARGIN_LEFT + plot_w / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        w,
        r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">cross-match pairs</text>"#,
        MARGIN_TOP + plot_h / 2.0
    );

    let ty = sy(threshold as f64);
    let _ = writeln!(w, r#"<line x1="{MARGIN_LEFT}" y1="{ty:.1}" x2="{:.1}" y2="{ty:.1}" stroke="black" stroke-dasharray="6 4"/>"#, MARGIN_LEFT + plot_w);
    let mut legend = vec![(format!("threshold {threshold}"), "black".to_string(), "6 4")];
    if let Some(c) = controls.first() {
        let cy = sy(*c);
        let _ = writeln!(w, r#"<line x1="{MARGIN_LEFT}" y1="{cy:.1}" x2="{:.1}" y2="{cy:.1}" stroke="grey" stroke-dasharray="2 3"/>"#, MARGIN_LEFT + plot_w);
        legend.push(("gold vs. gold".to_string(), "grey".to_string(), "2 3"));
    }

    let mut methods: Vec<&str> = Vec::new();
    for r in &points {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    for (i, method) in methods.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let series: Vec<&&SummaryRow> = points.iter().filter(|r| r.method == *method).collect();
        let upper = series.iter().filter_map(|r| Some((sx(r.checkpoint_seconds), sy(r.q75?))));
        let lower = series.iter().rev().filter_map(|r| Some((sx(r.checkpoint_seconds), sy(r.q25?))));
        let band: Vec<String> = upper.chain(lower).map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(w, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = series
            .iter()
            .filter_map(|r| Some(format!("{:.1},{:.1}", sx(r.checkpoint_seconds), sy(r.median?))))
            .collect();
        let _ = writeln!(w, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        legend.push((method.to_string(), color.to_string(), ""));
    }
    for (k, (label, color, dash)) in legend.iter().enumerate() {
        let y = MARGIN_TOP + 10.0 + 18.0 * k as f64;
        let x = WIDTH - MARGIN_RIGHT + 12.0;
        let _ = writeln!(
            w,
            r#"<line x1="{x:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/>"#,
            x + 22.0
        );
        let _ = writeln!(w, r#"<text x="{:.1}" y="{:.1}">{label}</text>"#, x + 28.0, y + 4.0);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
