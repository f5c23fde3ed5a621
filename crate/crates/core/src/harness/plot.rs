//! Aggregate CSV reading and SVG plotting.
//!
//! Each panel carries its geometry as `data-*` attributes and each series
//! carries its final mean and std, so a plot can be checked numerically.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub d: usize,
    pub algorithm: String,
    pub round: usize,
    pub mean: f64,
    pub std: f64,
}

/// Reads a `d,algorithm,round,mean,std` file. Rows are numbered from 1 after the header.
pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let text = fs::read_to_string(path)?;
    let perr = |row: usize, message: String| Error::Parse { path: path.to_path_buf(), row, message };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "d,algorithm,round,mean,std" => {}
        other => return Err(perr(0, format!("unexpected header {:?}", other.unwrap_or("")))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(perr(row, format!("expected 5 fields, found {}", f.len())));
        }
        let d = f[0].parse().map_err(|e| perr(row, format!("d: {e}")))?;
        let round = f[2].parse().map_err(|e| perr(row, format!("round: {e}")))?;
        let mean: f64 = f[3].parse().map_err(|e| perr(row, format!("mean: {e}")))?;
        let std: f64 = f[4].parse().map_err(|e| perr(row, format!("std: {e}")))?;
        if !mean.is_finite() || !std.is_finite() || std < 0.0 {
            return Err(perr(row, "mean and std must be finite with std >= 0".into()));
        }
        rows.push(AggregateRow { d, algorithm: f[1].to_string(), round, mean, std });
    }
    if rows.is_empty() {
        return Err(perr(1, "no data rows".into()));
    }
    Ok(rows)
}

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 260.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_T: f64 = 40.0;
const GAP: f64 = 100.0;
const COLORS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Series {
    algorithm: String,
    rows: Vec<AggregateRow>,
}

/// Plots mean cumulative regret with a ±std band, one panel per dimension.
pub fn emit_plot(paths: &[PathBuf], output: &Path) -> Result<()> {
    if paths.is_empty() {
        return Err(Error::Argument("no aggregate files to plot".into()));
    }
    let mut panels: BTreeMap<usize, Vec<Series>> = BTreeMap::new();
    let mut algorithms: Vec<String> = Vec::new();
    for p in paths {
        let rows = read_aggregate(p)?;
        let d = rows[0].d;
        let algorithm = rows[0].algorithm.clone();
        if rows.iter().any(|r| r.d != d || r.algorithm != algorithm) {
            return Err(Error::Parse { path: p.clone(), row: 1, message: "mixed series in one file".into() });
        }
        if !algorithms.contains(&algorithm) {
            algorithms.push(algorithm.clone());
        }
        panels.entry(d).or_default().push(Series { algorithm, rows });
    }

    let n = panels.len() as f64;
    let width = MARGIN_L + n * PANEL_W + (n - 1.0) * GAP + 160.0;
    let height = MARGIN_T + PANEL_H + 70.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (pi, (d, series)) in panels.iter().enumerate() {
        let x0 = MARGIN_L + pi as f64 * (PANEL_W + GAP);
        let y0 = MARGIN_T;
        let xmax = series.iter().flat_map(|s| s.rows.iter().map(|r| r.round)).max().unwrap_or(1).max(1) as f64;
        let top = series
            .iter()
            .flat_map(|s| s.rows.iter().map(|r| r.mean + r.std))
            .fold(0.0f64, f64::max);
        let ymax = if top > 0.0 { top * 1.05 } else { 1.0 };
        let px = |x: f64| x0 + x / xmax * PANEL_W;
        let py = |y: f64| y0 + PANEL_H - y / ymax * PANEL_H;
        let _ = writeln!(
            svg,
            r#"<g class="panel" data-d="{d}" data-x0="{x0}" data-y0="{y0}" data-width="{PANEL_W}" data-height="{PANEL_H}" data-xmax="{xmax}" data-ymax="{ymax}">"#
        );
        let _ = writeln!(
            svg,
            r#"<rect x="{x0}" y="{y0}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">d = {d}</text>"#, x0 + PANEL_W / 2.0, y0 - 12.0);
        for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let (tx, ty) = (px(frac * xmax), py(frac * ymax));
            let _ = writeln!(
                svg,
                r#"<text x="{tx}" y="{}" text-anchor="middle">{:.0}</text><text x="{}" y="{}" text-anchor="end">{:.0}</text>"#,
                y0 + PANEL_H + 16.0,
                frac * xmax,
                x0 - 6.0,
                ty + 4.0,
                frac * ymax
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">round</text>"#,
            x0 + PANEL_W / 2.0,
            y0 + PANEL_H + 40.0
        );
        let _ = writeln!(
            svg,
            r#"<text transform="translate({},{}) rotate(-90)" text-anchor="middle">cumulative regret</text>"#,
            x0 - 48.0,
            y0 + PANEL_H / 2.0
        );
        for s in series {
            let ci = algorithms.iter().position(|a| *a == s.algorithm).unwrap_or(0);
            let color = COLORS[ci % COLORS.len()];
            let last = s.rows.last().expect("nonempty series");
            let mut band = String::new();
            for r in &s.rows {
                let _ = write!(band, "{},{} ", px(r.round as f64), py(r.mean + r.std));
            }
            for r in s.rows.iter().rev() {
                let _ = write!(band, "{},{} ", px(r.round as f64), py((r.mean - r.std).max(0.0)));
            }
            let line: Vec<String> =
                s.rows.iter().map(|r| format!("{},{}", px(r.round as f64), py(r.mean))).collect();
            let _ = writeln!(
                svg,
                r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                band.trim_end()
            );
            let _ = writeln!(
                svg,
                r#"<polyline class="series" data-algorithm="{}" data-final-mean="{}" data-final-std="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                s.algorithm,
                last.mean,
                last.std,
                line.join(" ")
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    let lx = MARGIN_L + n * PANEL_W + (n - 1.0) * GAP + 20.0;
    let _ = writeln!(svg, r#"<g class="legend">"#);
    for (i, a) in algorithms.iter().enumerate() {
        let y = MARGIN_T + 20.0 + 20.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{y}" x2="{}" y2="{y}" stroke="{}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            lx + 24.0,
            COLORS[i % COLORS.len()],
            lx + 30.0,
            y + 4.0,
            a.to_uppercase()
        );
    }
    let _ = writeln!(svg, "</g>\n</svg>");
    if let Some(parent) = output.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(output, svg)?;
    Ok(())
}
