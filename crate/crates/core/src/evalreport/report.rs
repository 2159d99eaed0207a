use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::MetricsRow;
use crate::rl::CurveRow;
use crate::{Error, Result};

/// Metric columns of `metrics.csv`, after `method` and `n_episodes`.
pub const METRIC_COLUMNS: [&str; 6] = [
    "success_rate",
    "mpjpe_m",
    "base_pos_err_m",
    "base_ori_err_rad",
    "action_vel",
    "action_acc",
];

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    method: String,
    n_episodes: usize,
    success_rate: f64,
    mpjpe_m: f64,
    base_pos_err_m: f64,
    base_ori_err_rad: f64,
    action_vel: f64,
    action_acc: f64,
}

impl Record {
    fn new(method: &str, m: &MetricsRow) -> Record {
        Record {
            method: method.to_string(),
            n_episodes: m.n_episodes,
            success_rate: m.success_rate,
            mpjpe_m: m.mpjpe,
            base_pos_err_m: m.base_pos_err,
            base_ori_err_rad: m.base_ori_err,
            action_vel: m.mean_action_vel,
            action_acc: m.mean_action_acc,
        }
    }

    fn values(m: &MetricsRow) -> [f64; 6] {
        [
            m.success_rate,
            m.mpjpe,
            m.base_pos_err,
            m.base_ori_err,
            m.mean_action_vel,
            m.mean_action_acc,
        ]
    }
}

const PALETTE: [&str; 8] = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f"];
const W: f64 = 640.0;
const H: f64 = 360.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(title));
}

fn axes(out: &mut String, y_max: f64, y_label: &str) {
    let (x0, y0, y1) = (LEFT, H - BOTTOM, TOP);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#, W - RIGHT);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = y0 - (y0 - y1) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            y + 4.0,
            tick(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 0.01 && v.abs() < 1e4 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn nice_max(v: f64) -> f64 {
    if v > 0.0 && v.is_finite() {
        v * 1.1
    } else {
        1.0
    }
}

/// One bar per method.
fn bar_chart(title: &str, values: &[(&str, f64)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let y_max = nice_max(values.iter().map(|v| v.1).fold(0.0, f64::max));
    axes(&mut out, y_max, title);
    let slot = (W - LEFT - RIGHT) / values.len() as f64;
    let plot_h = H - BOTTOM - TOP;
    for (i, (name, v)) in values.iter().enumerate() {
        let h = plot_h * (v / y_max).clamp(0.0, 1.0);
        let x = LEFT + slot * i as f64 + slot * 0.15;
        let cx = LEFT + slot * (i as f64 + 0.5);
        let _ = writeln!(out, r#"<g class="series" data-name="{}">"#, escape(name));
        let _ = writeln!(
            out,
            r#"<rect x="{x:.1}" y="{:.1}" width="{:.1}" height="{h:.1}" fill="{}"/>"#,
            H - BOTTOM - h,
            slot * 0.7,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(out, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, H - BOTTOM - h - 4.0, tick(*v));
        let _ = writeln!(out, r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, H - BOTTOM + 18.0, escape(name));
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}

/// One polyline per named series of `(x, y)` points.
fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let points = series.iter().flat_map(|s| s.1.iter());
    let (x_max, y_max) = points.fold((0.0_f64, 0.0_f64), |(a, b), p| (a.max(p.0), b.max(p.1)));
    let (x_max, y_max) = (if x_max > 0.0 { x_max } else { 1.0 }, nice_max(y_max));
    axes(&mut out, y_max, y_label);
    let (pw, ph) = (W - LEFT - RIGHT, H - BOTTOM - TOP);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, W - RIGHT, H - BOTTOM + 18.0, tick(x_max));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - BOTTOM + 36.0, escape(x_label));
    for (i, (name, pts)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.1},{:.1}", LEFT + pw * x / x_max, H - BOTTOM - ph * (y / y_max).clamp(0.0, 1.0)))
            .collect();
        let _ = writeln!(out, r#"<g class="series" data-name="{}">"#, escape(name));
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#, path.join(" "));
        let ly = H - 22.0;
        let lx = LEFT + 130.0 * i as f64;
        let _ = writeln!(out, r#"<rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{colour}"/>"#, ly - 10.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 16.0, escape(name));
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `metrics.csv` plus one bar chart per metric (`<column>.svg`) in `dir`.
/// Returns the files written.
pub fn write_report(rows: &[(String, MetricsRow)], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::EmptyResults);
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::csv(&csv_path, e))?;
    for (name, m) in rows {
        w.serialize(Record::new(name, m)).map_err(|e| Error::csv(&csv_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let mut written = vec![csv_path];
    for (k, column) in METRIC_COLUMNS.iter().enumerate() {
        let values: Vec<(&str, f64)> = rows.iter().map(|(n, m)| (n.as_str(), Record::values(m)[k])).collect();
        let path = dir.join(format!("{column}.svg"));
        write(&path, &bar_chart(column, &values))?;
        written.push(path);
    }
    Ok(written)
}

/// Rows of a `metrics.csv` written by [`write_report`].
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<(String, MetricsRow)>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize::<Record>()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            Ok((
                rec.method,
                MetricsRow {
                    n_episodes: rec.n_episodes,
                    success_rate: rec.success_rate,
                    mpjpe: rec.mpjpe_m,
                    base_pos_err: rec.base_pos_err_m,
                    base_ori_err: rec.base_ori_err_rad,
                    mean_action_vel: rec.action_vel,
                    mean_action_acc: rec.action_acc,
                },
            ))
        })
        .collect()
}

/// `r_joint` against env steps for each named training run.
pub fn write_curve_plot(runs: &[(String, Vec<CurveRow>)], path: impl AsRef<Path>) -> Result<()> {
    if runs.is_empty() {
        return Err(Error::EmptyResults);
    }
    let series: Vec<(&str, Vec<(f64, f64)>)> = runs
        .iter()
        .map(|(name, rows)| (name.as_str(), rows.iter().map(|r| (r.env_steps as f64, r.r_joint)).collect()))
        .collect();
    write(path.as_ref(), &line_chart("r_joint", "env steps", "r_joint", &series))
}
