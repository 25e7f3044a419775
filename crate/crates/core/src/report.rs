//! CSV, JSON and SVG emitters for training and evaluation outputs.
//!
//! Numbers in CSV files use 17 significant digits; SVG coordinates use two
//! decimals. Nothing here reads the clock, so identical inputs give identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::evaluation::{ClassificationReport, ScoredEdge};
use crate::netdata::format_float;
use crate::topology::Measure;
use crate::trainer::EpochRecord;

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct ReportError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

fn write(path: &Path, contents: String) -> Result<(), ReportError> {
    fs::write(path, contents).map_err(|source| ReportError { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    write(path, serde_json::to_string_pretty(value).expect("report serializes") + "\n")
}

pub fn write_train_log(path: &Path, history: &[EpochRecord]) -> Result<(), ReportError> {
    let mut out = String::from("epoch,train_loss,train_centeredness,train_kl,test_loss\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.epoch,
            format_float(r.train_loss),
            format_float(r.train_centeredness),
            format_float(r.train_kl),
            format_float(r.test_loss)
        );
    }
    write(path, out)
}

/// Wall-clock time per epoch, kept out of the training log.
pub fn write_timing(path: &Path, elapsed_ms: &[u128]) -> Result<(), ReportError> {
    let mut out = String::from("epoch,elapsed_ms\n");
    for (e, ms) in elapsed_ms.iter().enumerate() {
        let _ = writeln!(out, "{},{ms}", e + 1);
    }
    write(path, out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CenterednessRow {
    pub fold: usize,
    pub method: String,
    pub per_view: Vec<f64>,
    pub overall: f64,
}

pub fn write_centeredness_csv(path: &Path, view_names: &[String], rows: &[CenterednessRow]) -> Result<(), ReportError> {
    let mut out = String::from("fold,method");
    for v in view_names {
        let _ = write!(out, ",{v}");
    }
    out.push_str(",overall\n");
    for r in rows {
        let _ = write!(out, "{},{}", r.fold, r.method);
        for d in &r.per_view {
            let _ = write!(out, ",{}", format_float(*d));
        }
        let _ = writeln!(out, ",{}", format_float(r.overall));
    }
    write(path, out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologyRow {
    pub fold: usize,
    pub measure: Measure,
    pub method: String,
    pub kl: f64,
}

pub fn write_topology_csv(path: &Path, rows: &[TopologyRow]) -> Result<(), ReportError> {
    let mut out = String::from("fold,measure,method,kl_divergence\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.fold, r.measure, r.method, format_float(r.kl));
    }
    write(path, out)
}

pub fn write_classification_csv(path: &Path, task: &str, report: &ClassificationReport) -> Result<(), ReportError> {
    let mut out = String::from("task,method,k,fold,accuracy\n");
    for r in &report.rows {
        let _ = writeln!(out, "{task},{},{},{},{}", report.method, r.k, r.fold, format_float(r.accuracy));
    }
    write(path, out)
}

const PALETTE: [&str; 6] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"];

fn svg_open(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn legend(out: &mut String, names: &[String], x: f64, y: f64) {
    for (k, name) in names.iter().enumerate() {
        let yy = y + 16.0 * k as f64;
        let _ = writeln!(out, "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{}\"/>", yy - 9.0, PALETTE[k % PALETTE.len()]);
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{yy:.2}\">{}</text>", x + 14.0, escape(name));
    }
}

/// Grouped bars: one group per fold plus a trailing "Mean" group, one bar per method.
pub fn centeredness_svg(rows: &[CenterednessRow]) -> String {
    let mut methods: Vec<String> = Vec::new();
    let mut folds: Vec<usize> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        if !folds.contains(&r.fold) {
            folds.push(r.fold);
        }
    }
    let value = |fold: Option<usize>, method: &str| -> f64 {
        let hits: Vec<f64> = rows.iter().filter(|r| r.method == method && fold.is_none_or(|f| r.fold == f)).map(|r| r.overall).collect();
        if hits.is_empty() {
            0.0
        } else {
            hits.iter().sum::<f64>() / hits.len() as f64
        }
    };
    let groups: Vec<(String, Option<usize>)> = folds.iter().map(|&f| (format!("Fold {}", f + 1), Some(f))).chain([("Mean".to_string(), None)]).collect();
    let max = rows.iter().map(|r| r.overall).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (left, top, plot_h, bar_w) = (50.0, 20.0, 220.0, 14.0);
    let group_w = bar_w * methods.len() as f64 + 16.0;
    let width = left + group_w * groups.len() as f64 + 140.0;
    let mut out = svg_open(width, top + plot_h + 50.0);
    let _ = writeln!(out, "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{:.2}\" stroke=\"black\"/>", top + plot_h);
    let _ = writeln!(out, "<text x=\"4\" y=\"{:.2}\">{}</text>", top + 4.0, format!("{max:.3}"));
    for (g, (label, fold)) in groups.iter().enumerate() {
        let gx = left + 8.0 + group_w * g as f64;
        for (m, method) in methods.iter().enumerate() {
            let h = plot_h * value(*fold, method) / max;
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{bar_w:.2}\" height=\"{h:.2}\" fill=\"{}\"/>",
                gx + bar_w * m as f64,
                top + plot_h - h,
                PALETTE[m % PALETTE.len()]
            );
        }
        let _ = writeln!(out, "<text x=\"{gx:.2}\" y=\"{:.2}\">{}</text>", top + plot_h + 16.0, escape(label));
    }
    let _ = writeln!(out, "<line x1=\"{left}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"black\"/>", top + plot_h, width - 140.0, top + plot_h);
    legend(&mut out, &methods, width - 130.0, top + 10.0);
    out.push_str("</svg>\n");
    out
}

/// One polyline per named distribution over node index.
pub fn profile_svg(title: &str, series: &[(String, Vec<f64>)]) -> String {
    let n = series.iter().map(|(_, p)| p.len()).max().unwrap_or(0).max(2);
    let max = series.iter().flat_map(|(_, p)| p.iter().copied()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (left, top, plot_w, plot_h) = (50.0, 30.0, 420.0, 200.0);
    let mut out = svg_open(left + plot_w + 150.0, top + plot_h + 40.0);
    let _ = writeln!(out, "<text x=\"{left}\" y=\"18\">{}</text>", escape(title));
    let _ = writeln!(out, "<rect x=\"{left}\" y=\"{top}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"black\"/>");
    for (k, (_, p)) in series.iter().enumerate() {
        let points: Vec<String> = p
            .iter()
            .enumerate()
            .map(|(i, v)| format!("{:.2},{:.2}", left + plot_w * i as f64 / (n - 1) as f64, top + plot_h * (1.0 - v / max)))
            .collect();
        let _ = writeln!(out, "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>", PALETTE[k % PALETTE.len()], points.join(" "));
    }
    let _ = writeln!(out, "<text x=\"{left}\" y=\"{:.2}\">node</text>", top + plot_h + 16.0);
    let names: Vec<String> = series.iter().map(|(name, _)| name.clone()).collect();
    legend(&mut out, &names, left + plot_w + 12.0, top + 10.0);
    out.push_str("</svg>\n");
    out
}

/// Nodes on a circle with the selected edges drawn as chords, thicker for higher scores.
pub fn circular_edges_svg(n_r: usize, edges: &[ScoredEdge]) -> String {
    let (cx, cy, r) = (200.0, 200.0, 160.0);
    let pos = |i: usize| {
        let a = std::f64::consts::TAU * i as f64 / n_r as f64 - std::f64::consts::FRAC_PI_2;
        (cx + r * a.cos(), cy + r * a.sin())
    };
    let max = edges.iter().map(|e| e.score).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut out = svg_open(400.0, 400.0);
    for (k, e) in edges.iter().enumerate() {
        let ((x1, y1), (x2, y2)) = (pos(e.i), pos(e.j));
        let _ = writeln!(
            out,
            "<path d=\"M {x1:.2} {y1:.2} Q {cx:.2} {cy:.2} {x2:.2} {y2:.2}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{:.2}\"/>",
            PALETTE[k % PALETTE.len()],
            1.0 + 4.0 * e.score / max
        );
    }
    for i in 0..n_r {
        let (x, y) = pos(i);
        let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"#333\"/>");
        let (lx, ly) = (cx + (r + 14.0) * (x - cx) / r, cy + (r + 14.0) * (y - cy) / r);
        let _ = writeln!(out, "<text x=\"{lx:.2}\" y=\"{ly:.2}\" text-anchor=\"middle\" dominant-baseline=\"middle\">{i}</text>");
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_svg(path: &Path, svg: String) -> Result<(), ReportError> {
    write(path, svg)
}
