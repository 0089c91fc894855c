//! Static SVG line charts of the tidy figure tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::io::{parse_f64, Table};

const PANEL_W: f64 = 640.0;
const PANEL_H: f64 = 360.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 48.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// `(x, mean, std)`
pub type Point = (f64, f64, f64);

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// Sorted by x.
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Group a `metric,series,velocity,mean,std,...` table into one panel per metric.
pub fn panels_from_table(table: &Table) -> Result<Vec<Panel>> {
    let (m, s, v, mean, std) = (
        table.column("metric")?,
        table.column("series")?,
        table.column("velocity")?,
        table.column("mean")?,
        table.column("std")?,
    );
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, BTreeMap<String, Vec<Point>>> = BTreeMap::new();
    for row in &table.rows {
        if !order.contains(&row[m]) {
            order.push(row[m].clone());
        }
        grouped
            .entry(row[m].clone())
            .or_default()
            .entry(row[s].clone())
            .or_default()
            .push((
                parse_f64(&row[v])?,
                parse_f64(&row[mean])?,
                parse_f64(&row[std])?,
            ));
    }
    Ok(order
        .into_iter()
        .map(|metric| {
            let series = grouped
                .remove(&metric)
                .unwrap_or_default()
                .into_iter()
                .map(|(label, mut points)| {
                    points.sort_by(|a, b| a.0.total_cmp(&b.0));
                    Series { label, points }
                })
                .collect();
            Panel {
                y_label: metric,
                series,
            }
        })
        .collect())
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn nice_max(v: f64) -> f64 {
    if !(v.is_finite() && v > 0.0) {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .into_iter()
        .find(|s| s * mag >= v)
        .unwrap_or(10.0);
    step * mag
}

fn draw_panel(out: &mut String, panel: &Panel, top: f64, x_label: &str) {
    let points = panel.series.iter().flat_map(|s| s.points.iter());
    let finite: Vec<_> = points.filter(|p| p.1.is_finite()).collect();
    let (mut x_lo, mut x_hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.0), hi.max(p.0))
        });
    if !x_lo.is_finite() {
        (x_lo, x_hi) = (0.0, 1.0);
    }
    if x_hi - x_lo < 1e-12 {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let y_top = finite
        .iter()
        .map(|p| p.1 + if p.2.is_finite() { p.2 } else { 0.0 })
        .fold(0.0, f64::max);
    let y_hi = nice_max(y_top);

    let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
    let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let py = |y: f64| top + MARGIN_T + plot_h - (y.clamp(0.0, y_hi) / y_hi) * plot_h;

    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN_L}" y="{}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##,
        top + MARGIN_T
    );
    for k in 0..=4 {
        let y = y_hi * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_L}" x2="{}" y1="{y0:.2}" y2="{y0:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" font-size="11" text-anchor="end">{y:.2}</text>"##,
            MARGIN_L + plot_w,
            MARGIN_L - 6.0,
            py(y) + 4.0,
            y0 = py(y),
        );
    }
    let mut xs: Vec<f64> = finite.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in xs {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{x:.1}</text>"#,
            px(x),
            top + MARGIN_T + plot_h + 16.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        top + PANEL_H - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        top + MARGIN_T + plot_h / 2.0,
        top + MARGIN_T + plot_h / 2.0,
        escape(&panel.y_label)
    );

    for (k, series) in panel.series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<_> = series.points.iter().filter(|p| p.1.is_finite()).collect();
        for p in &pts {
            if p.2.is_finite() && p.2 > 0.0 {
                let _ = writeln!(
                    out,
                    r#"<line x1="{x:.2}" x2="{x:.2}" y1="{:.2}" y2="{:.2}" stroke="{color}" stroke-opacity="0.5"/>"#,
                    py(p.1 - p.2),
                    py(p.1 + p.2),
                    x = px(p.0),
                );
            }
        }
        let path: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
        for p in &pts {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px(p.0),
                py(p.1)
            );
        }
        let ly = top + MARGIN_T + 12.0 + 18.0 * k as f64;
        let lx = MARGIN_L + plot_w + 14.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" x2="{:.2}" y1="{ly:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
}

/// Render stacked panels sharing an x label into a standalone SVG document.
pub fn render_svg(title: &str, x_label: &str, panels: &[Panel]) -> Result<String> {
    if panels.is_empty() {
        return Err(Error::Csv("nothing to plot".into()));
    }
    let height = 30.0 + PANEL_H * panels.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" height="{height}" viewBox="0 0 {PANEL_W} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" font-size="15" text-anchor="middle">{}</text>"#,
        PANEL_W / 2.0,
        escape(title)
    );
    for (k, panel) in panels.iter().enumerate() {
        draw_panel(&mut out, panel, 20.0 + PANEL_H * k as f64, x_label);
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        Table::parse(
            "metric,series,velocity,mean,std,n_seeds\n\
             success_rate,mutual,1.0,0.8,0.1,3\n\
             success_rate,mutual,0.8,0.5,0.05,3\n\
             success_rate,individual,1.0,0.4,0,3\n\
             fairness_bits,mutual,1.0,0.3,0.1,3\n",
        )
        .unwrap()
    }

    #[test]
    fn panels_group_by_metric_and_sort_x() {
        let panels = panels_from_table(&table()).unwrap();
        assert_eq!(panels.len(), 2);
        assert_eq!(panels[0].y_label, "success_rate");
        let mutual = panels[0]
            .series
            .iter()
            .find(|s| s.label == "mutual")
            .unwrap();
        assert_eq!(mutual.points[0].0, 0.8);
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let panels = panels_from_table(&table()).unwrap();
        let svg = render_svg("t <1>", "pursuer speed", &panels).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains("t &lt;1&gt;"));
    }

    #[test]
    fn nan_points_are_skipped_and_empty_rejected() {
        let t =
            Table::parse("metric,series,velocity,mean,std,n_seeds\nm,s,1.0,NaN,NaN,0\n").unwrap();
        let svg = render_svg("x", "v", &panels_from_table(&t).unwrap()).unwrap();
        assert!(!svg.contains("NaN"));
        assert!(render_svg("x", "v", &[]).is_err());
    }

    #[test]
    fn nice_max_rounds_up() {
        assert_eq!(nice_max(0.83), 1.0);
        assert_eq!(nice_max(1.58), 2.0);
        assert_eq!(nice_max(0.0), 1.0);
        assert_eq!(nice_max(0.21), 0.25);
    }
}
