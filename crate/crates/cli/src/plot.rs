//! SVG line plots of mean clustering error.
//!
//! One panel per `(distribution, c, d)`: the swept variable on the x-axis,
//! mean `R_BL` on the y-axis, one curve per value of the other variable.
//! Tensor curves are solid and baseline curves dashed. Every marker carries
//! its values as `data-*` attributes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::grid::{Algorithm, Axis};
use crate::harness::{read_summary, SummaryRow};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 52.0;
const COLORS: [&str; 6] = ["red", "black", "blue", "green", "orange", "purple"];

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub name: String,
    pub svg: String,
}

struct Curve {
    algorithm: Algorithm,
    fixed: usize,
    points: Vec<(usize, f64, &'static str, usize, usize)>,
}

fn swept(row: &SummaryRow, axis: Axis) -> (usize, usize) {
    match axis {
        Axis::N => (row.n, row.layers),
        Axis::L => (row.layers, row.n),
    }
}

/// Builds one SVG per panel. Errors when there is nothing to draw.
pub fn render(summary: &[SummaryRow], axis: Axis) -> Result<Vec<Panel>> {
    let mut panels: Vec<(String, f64, f64)> = Vec::new();
    for r in summary.iter().filter(|r| r.mean_r_bl.is_some()) {
        let key = (r.distribution.clone(), r.c, r.d);
        if !panels.contains(&key) {
            panels.push(key);
        }
    }
    if panels.is_empty() {
        bail!("summary has no rows with a mean error to plot");
    }
    Ok(panels
        .into_iter()
        .map(|(dist, c, d)| {
            let rows: Vec<&SummaryRow> = summary.iter().filter(|r| r.distribution == dist && r.c == c && r.d == d && r.mean_r_bl.is_some()).collect();
            Panel { name: format!("{dist}_c{c}_d{d}"), svg: render_panel(&rows, axis, &format!("{dist}, B ~ U({c}, {d})")) }
        })
        .collect())
}

fn render_panel(rows: &[&SummaryRow], axis: Axis, title: &str) -> String {
    let mut curves: Vec<Curve> = Vec::new();
    for r in rows {
        let (x, fixed) = swept(r, axis);
        let y = r.mean_r_bl.expect("filtered");
        let idx = match curves.iter().position(|c| c.algorithm == r.algorithm && c.fixed == fixed) {
            Some(i) => i,
            None => {
                curves.push(Curve { algorithm: r.algorithm, fixed, points: Vec::new() });
                curves.len() - 1
            }
        };
        curves[idx].points.push((x, y, r.algorithm.name(), r.n, r.layers));
    }
    for c in &mut curves {
        c.points.sort_by_key(|p| p.0);
    }
    let mut fixed_values: Vec<usize> = curves.iter().map(|c| c.fixed).collect();
    fixed_values.sort();
    fixed_values.dedup();

    let xs: Vec<usize> = rows.iter().map(|r| swept(r, axis).0).collect();
    let (xmin, xmax) = (*xs.iter().min().expect("nonempty") as f64, *xs.iter().max().expect("nonempty") as f64);
    let ymax = rows.iter().filter_map(|r| r.mean_r_bl).fold(0.05f64, f64::max) * 1.1;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| if xmax > xmin { MARGIN_LEFT + (x - xmin) / (xmax - xmin) * plot_w } else { MARGIN_LEFT + plot_w / 2.0 };
    let py = |y: f64| MARGIN_TOP + plot_h - y / ymax * plot_h;
    let (xlabel, fixed_label) = match axis {
        Axis::N => ("n", "L"),
        Axis::L => ("L", "n"),
    };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, MARGIN_LEFT + plot_w / 2.0, escape(title));
    // axes and ticks
    let (x0, y0) = (MARGIN_LEFT, MARGIN_TOP + plot_h);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#, x0 + plot_w);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{MARGIN_TOP}" x2="{x0}" y2="{y0}" stroke="black"/>"#);
    let mut ticks: Vec<usize> = xs.clone();
    ticks.sort();
    ticks.dedup();
    for t in ticks {
        let x = px(t as f64);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{t}</text>"#, y0 + 4.0, y0 + 18.0);
    }
    for i in 0..=5 {
        let v = ymax * i as f64 / 5.0;
        let y = py(v);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"#, x0 - 4.0, x0 - 8.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, MARGIN_LEFT + plot_w / 2.0, HEIGHT - 12.0);
    let _ = writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">mean R_BL</text>"#, MARGIN_TOP + plot_h / 2.0, MARGIN_TOP + plot_h / 2.0);

    for c in &curves {
        let color = COLORS[fixed_values.iter().position(|&f| f == c.fixed).expect("present") % COLORS.len()];
        let dash = if c.algorithm == Algorithm::Baseline { r#" stroke-dasharray="6 4""# } else { "" };
        let pts: Vec<String> = c.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0 as f64), py(p.1))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="curve" data-algorithm="{}" data-fixed="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
            c.algorithm,
            c.fixed,
            pts.join(" ")
        );
        for &(x, y, alg, n, l) in &c.points {
            let _ = writeln!(
                s,
                r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="{color}" data-algorithm="{alg}" data-n="{n}" data-L="{l}" data-mean-r-bl="{y}"/>"#,
                px(x as f64),
                py(y)
            );
        }
    }
    // legend
    let lx = WIDTH - MARGIN_RIGHT + 16.0;
    let mut ly = MARGIN_TOP + 8.0;
    for (i, f) in fixed_values.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{fixed_label} = {f}</text>"#, lx + 24.0, lx + 30.0, ly + 4.0);
        ly += 18.0;
    }
    ly += 8.0;
    let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="gray"/><text x="{}" y="{}">tensor</text>"#, lx + 24.0, lx + 30.0, ly + 4.0);
    ly += 18.0;
    let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="gray" stroke-dasharray="6 4"/><text x="{}" y="{}">baseline</text>"#, lx + 24.0, lx + 30.0, ly + 4.0);
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Reads a summary CSV and writes one `<panel>.svg` per panel into `out_dir`.
pub fn plot_summary(summary_csv: &Path, axis: Axis, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_summary(summary_csv).with_context(|| format!("reading {}", summary_csv.display()))?;
    let panels = render(&rows, axis)?;
    fs::create_dir_all(out_dir)?;
    let mut paths = Vec::new();
    for p in panels {
        let path = out_dir.join(format!("{}.svg", p.name));
        fs::write(&path, p.svg)?;
        paths.push(path);
    }
    Ok(paths)
}
