//! Self-contained SVG line charts.

use std::fmt::Write as _;

use cavq_core::harness::{NormRecord, OverlaySeries, TrajectorySource};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Horizontal reference lines (value, label).
    pub guides: Vec<(f64, String)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

impl Chart {
    pub fn to_svg(&self) -> String {
        let (x0, x1) = bounds(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let (y0, y1) = bounds(
            self.series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| p.1))
                .chain(self.guides.iter().map(|g| g.0)),
        );
        let plot_w = WIDTH - 2.0 * MARGIN;
        let plot_h = HEIGHT - 2.0 * MARGIN;
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * plot_w;
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * plot_h;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                sx(xv),
                HEIGHT - MARGIN + 16.0,
                tick(xv)
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                MARGIN - 6.0,
                sy(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        for (value, label) in &self.guides {
            let y = sy(*value);
            let _ = writeln!(
                svg,
                r##"<line x1="{MARGIN}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#999" stroke-dasharray="2 3"/><text x="{:.1}" y="{:.1}" fill="#666">{}</text>"##,
                WIDTH - MARGIN,
                MARGIN + 4.0,
                y - 3.0,
                escape(label)
            );
        }
        for s in &self.series {
            if s.points.is_empty() {
                continue;
            }
            let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                s.color,
                path.join(" ")
            );
        }
        let mut legend_y = MARGIN + 14.0;
        for s in self.series.iter().filter(|s| !s.label.is_empty()) {
            let x = WIDTH - MARGIN - 130.0;
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                svg,
                r#"<line x1="{x}" y1="{legend_y}" x2="{}" y2="{legend_y}" stroke="{}" stroke-width="2"{dash}/><text x="{}" y="{}">{}</text>"#,
                x + 24.0,
                s.color,
                x + 30.0,
                legend_y + 4.0,
                escape(&s.label)
            );
            legend_y += 16.0;
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{:.2}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Q-table norm per vehicle plus their average against training episodes.
pub fn qnorm_chart(records: &[NormRecord]) -> Chart {
    let agents = records.first().map_or(0, |r| r.norms.len());
    let mut series: Vec<Series> = (0..agents)
        .map(|i| Series {
            label: format!("CAV {}", i + 1),
            color: PALETTE[i % PALETTE.len()].into(),
            dashed: false,
            points: records
                .iter()
                .filter_map(|r| r.norms.get(i).map(|&n| (r.episode as f64, n)))
                .collect(),
        })
        .collect();
    if agents > 0 {
        series.push(Series {
            label: "average".into(),
            color: "black".into(),
            dashed: true,
            points: records.iter().map(|r| (r.episode as f64, r.average())).collect(),
        });
    }
    Chart {
        title: "Q-table norm".into(),
        x_label: "episode".into(),
        y_label: "norm".into(),
        series,
        guides: Vec::new(),
    }
}

/// Position against time; learned traces solid, baseline dashed.
pub fn overlay_chart(series: &[OverlaySeries], control_zone_length: f64, exit_position: f64) -> Chart {
    let series = series
        .iter()
        .map(|s| {
            let learned = s.source == TrajectorySource::Learned;
            Series {
                label: format!("CAV {} ({})", s.vehicle + 1, s.source.name()),
                color: PALETTE[s.vehicle % PALETTE.len()].into(),
                dashed: !learned,
                points: s.points.clone(),
            }
        })
        .collect();
    Chart {
        title: "Position trajectories".into(),
        x_label: "time (s)".into(),
        y_label: "position (m)".into(),
        series,
        guides: vec![
            (control_zone_length, "merging zone entry".into()),
            (exit_position, "merging zone exit".into()),
        ],
    }
}
