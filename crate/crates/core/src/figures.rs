//! Self-contained SVG line plots of level and occupation curves.
//!
//! Every curve is a `<polyline>` (or a `<circle>` when it has a single
//! point) tagged with a `data-series` attribute, so the output can be
//! checked structurally without rendering it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::output::TrajectoryTable;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const MARGIN_LEFT: f64 = 78.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 60.0;
const MARGIN_BOTTOM: f64 = 58.0;
const PANEL_GAP: f64 = 60.0;
const Y_TICKS: usize = 6;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Default width of an occupation panel, in time units.
pub const SEGMENT: f64 = 25.0;

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub t: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Split the time axis into panels this wide, each with its own y-range.
    pub segment: Option<f64>,
}

pub fn levels_plot(table: &TrajectoryTable, title: &str) -> Plot {
    let t = table.times();
    Plot {
        title: title.into(),
        x_label: "t".into(),
        y_label: "energy".into(),
        series: (0..table.n)
            .map(|i| Series {
                name: format!("level_{}", i + 1),
                t: t.clone(),
                y: table.level(i),
            })
            .collect(),
        segment: None,
    }
}

pub fn occupations_plot(table: &TrajectoryTable, title: &str, segment: Option<f64>) -> Plot {
    let t = table.times();
    Plot {
        title: title.into(),
        x_label: "t".into(),
        y_label: "occupation".into(),
        series: (0..table.n)
            .map(|i| Series {
                name: format!("occ_{}", i + 1),
                t: t.clone(),
                y: table.occupation(i),
            })
            .collect(),
        segment,
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1e-12) };
    (lo - pad, hi + pad)
}

/// Round tick positions (steps of 1, 2 or 5 times a power of ten) with
/// labels just precise enough to tell neighbours apart.
fn ticks(lo: f64, hi: f64, max_count: usize) -> Vec<(f64, String)> {
    let raw = (hi - lo) / max_count as f64;
    if !(raw > 0.0 && raw.is_finite()) {
        return vec![(lo, label(lo, 1.0))];
    }
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).map(|v| (v, label(v, step))).collect()
}

fn label(v: f64, step: f64) -> String {
    let v = if v.abs() < 1e-9 * step { 0.0 } else { v };
    if (1e-12..1e5).contains(&step) && v.abs() < 1e6 {
        let decimals = (-step.log10().floor()).max(0.0) as usize;
        format!("{v:.decimals$}")
    } else {
        format!("{v:.3e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Panel {
    x0: f64,
    width: f64,
    t: (f64, f64),
    y: (f64, f64),
}

impl Panel {
    fn px(&self, t: f64) -> f64 {
        self.x0 + (t - self.t.0) / (self.t.1 - self.t.0) * self.width
    }

    fn py(&self, y: f64) -> f64 {
        let h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        MARGIN_TOP + h - (y - self.y.0) / (self.y.1 - self.y.0) * h
    }
}

fn panel_windows(plot: &Plot) -> Vec<(f64, f64)> {
    let (t_lo, t_hi) = plot
        .series
        .iter()
        .flat_map(|s| s.t.iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(t), b.max(t)));
    if !t_lo.is_finite() {
        return vec![(0.0, 1.0)];
    }
    if t_hi <= t_lo {
        return vec![(t_lo - 0.5, t_hi + 0.5)];
    }
    match plot.segment {
        Some(w) if w > 0.0 && t_hi - t_lo > w => {
            let mut edges = vec![t_lo];
            let mut e = ((t_lo / w).floor() + 1.0) * w;
            while e < t_hi {
                edges.push(e);
                e += w;
            }
            edges.push(t_hi);
            edges.windows(2).map(|p| (p[0], p[1])).filter(|p| p.1 > p.0).collect()
        }
        _ => vec![(t_lo, t_hi)],
    }
}

pub fn render_svg(plot: &Plot) -> String {
    let windows = panel_windows(plot);
    let count = windows.len() as f64;
    let width = (WIDTH - MARGIN_LEFT - MARGIN_RIGHT - PANEL_GAP * (count - 1.0)) / count;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(&plot.title)
    );
    for (p, &(t0, t1)) in windows.iter().enumerate() {
        let inside = |t: f64| t >= t0 && t <= t1;
        let y = range(plot.series.iter().flat_map(|s| {
            s.t.iter().zip(&s.y).filter(move |(t, _)| inside(**t)).map(|(_, y)| *y)
        }));
        let panel = Panel {
            x0: MARGIN_LEFT + p as f64 * (width + PANEL_GAP),
            width,
            t: (t0, t1),
            y,
        };
        draw_axes(&mut out, &panel, p == 0, &plot.y_label);
        for (k, s) in plot.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let points: Vec<(f64, f64)> = s
                .t
                .iter()
                .zip(&s.y)
                .filter(|(t, y)| inside(**t) && y.is_finite())
                .map(|(&t, &y)| (panel.px(t), panel.py(y)))
                .collect();
            match points.as_slice() {
                [] => {}
                [(x, y)] => {
                    let _ = writeln!(
                        out,
                        r#"<circle data-series="{}" cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#,
                        s.name
                    );
                }
                _ => {
                    let coords: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                    let _ = writeln!(
                        out,
                        r#"<polyline data-series="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                        s.name,
                        coords.join(" ")
                    );
                }
            }
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / 2.0,
        HEIGHT - 14.0,
        escape(&plot.x_label)
    );
    let entry = 96.0;
    let left = (WIDTH - entry * plot.series.len() as f64) / 2.0;
    for (k, s) in plot.series.iter().enumerate() {
        let x = left + entry * k as f64;
        let y = 44.0;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            x,
            y - 4.0,
            x + 18.0,
            y - 4.0,
            PALETTE[k % PALETTE.len()],
            x + 24.0,
            y,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn draw_axes(out: &mut String, panel: &Panel, first: bool, y_label: &str) {
    let bottom = HEIGHT - MARGIN_BOTTOM;
    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{MARGIN_TOP}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        panel.x0,
        panel.width,
        bottom - MARGIN_TOP
    );
    let x_ticks = ((panel.width / 70.0) as usize).max(2);
    for t in ticks(panel.t.0, panel.t.1, x_ticks) {
        let x = panel.px(t.0);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{:.1}" stroke="black"/><text x="{x:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
            bottom + 5.0,
            bottom + 18.0,
            t.1
        );
    }
    for v in ticks(panel.y.0, panel.y.1, Y_TICKS) {
        let y = panel.py(v.0);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            panel.x0 - 5.0,
            panel.x0,
            panel.x0 - 7.0,
            y + 4.0,
            v.1
        );
    }
    if first {
        let cy = (MARGIN_TOP + bottom) / 2.0;
        let _ = writeln!(
            out,
            r#"<text x="16" y="{cy:.1}" text-anchor="middle" transform="rotate(-90 16 {cy:.1})">{}</text>"#,
            escape(y_label)
        );
    }
}

/// Writes `levels.svg` and `occupations.svg` under `dir` for one trajectory.
pub fn write_pair(table: &TrajectoryTable, dir: &Path, prefix: &str, noisy: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let tag = if noisy { " (noisy)" } else { "" };
    let levels = levels_plot(table, &format!("Energy levels{tag}"));
    let occ = occupations_plot(table, &format!("Occupations{tag}"), Some(SEGMENT));
    let mut written = Vec::new();
    for (name, plot) in [("levels", levels), ("occupations", occ)] {
        let path = dir.join(format!("{prefix}{name}.svg"));
        fs::write(&path, render_svg(&plot))?;
        written.push(path);
    }
    Ok(written)
}

/// The four standard figures: noiseless levels and occupations, then the
/// noisy pair when a noisy trajectory is supplied.
pub fn emit_figures(clean: &TrajectoryTable, noisy: Option<&TrajectoryTable>, dir: &Path) -> Result<Vec<PathBuf>> {
    if let Some(noisy) = noisy {
        if noisy.n != clean.n {
            return Err(Error::SchemaMismatch(format!(
                "noisy trajectory has {} levels, noiseless has {}",
                noisy.n, clean.n
            )));
        }
    }
    let mut written = Vec::new();
    fs::create_dir_all(dir)?;
    let l = levels_plot(clean, "Energy levels");
    let o = occupations_plot(clean, "Occupations", Some(SEGMENT));
    let mut plots = vec![("fig1_levels.svg", l), ("fig2_occupations.svg", o)];
    if let Some(noisy) = noisy {
        plots.push(("fig3_levels_noisy.svg", levels_plot(noisy, "Energy levels (noisy)")));
        plots.push((
            "fig4_occupations_noisy.svg",
            occupations_plot(noisy, "Occupations (noisy)", Some(SEGMENT)),
        ));
    }
    for (name, plot) in plots {
        let path = dir.join(name);
        fs::write(&path, render_svg(&plot))?;
        written.push(path);
    }
    Ok(written)
}

/// Names of the distinct curves drawn in an SVG produced by [`render_svg`].
pub fn series_names(svg: &str) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for piece in svg.split("data-series=\"").skip(1) {
        if let Some(end) = piece.find('"') {
            let name = &piece[..end];
            if !names.iter().any(|n| n == name) {
                names.push(name.to_string());
            }
        }
    }
    names
}
