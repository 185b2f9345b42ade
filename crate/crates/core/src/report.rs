//! Metric tables as CSV and bar charts as standalone SVG.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::bench::ComboRow;
use crate::error::{Error, Result};
use crate::metrics::{ConfusionCounts, MetricReport};

/// Column order of every metric table.
pub const METRIC_TABLE_HEADER: [&str; 10] = ["name", "tp", "fp", "fn", "tn", "precision", "recall", "fpr", "f1", "error"];

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub counts: ConfusionCounts,
}

impl MetricRow {
    pub fn new(name: impl Into<String>, counts: ConfusionCounts) -> Self {
        MetricRow {
            name: name.into(),
            counts,
        }
    }

    pub fn metrics(&self) -> MetricReport {
        self.counts.metrics()
    }
}

pub fn metric_table_csv(rows: &[MetricRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRIC_TABLE_HEADER)?;
    for r in rows {
        let c = r.counts;
        let m = r.metrics();
        w.write_record([
            r.name.clone(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
            m.precision.to_string(),
            m.recall.to_string(),
            m.fpr.to_string(),
            m.f1.to_string(),
            m.error.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Vertical bar chart on a `[0, y_max]` axis. Each bar is one `<rect
/// class="bar">` carrying its label and value in a `<title>`.
pub fn bar_chart_svg(title: &str, labels: &[String], values: &[f64], y_max: f64) -> Result<String> {
    if labels.len() != values.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            actual: values.len(),
        });
    }
    if !(y_max > 0.0) {
        return Err(Error::param("y_max", "must be positive"));
    }
    let (left, right, top, bottom) = (50.0, 20.0, 40.0, 120.0);
    let slot = 24.0;
    let plot_h = 260.0;
    let width = left + right + slot * values.len().max(1) as f64;
    let height = top + plot_h + bottom;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{}</text>"#, width / 2.0, escape(title)).unwrap();
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = top + plot_h - plot_h * k as f64 / 4.0;
        writeln!(
            s,
            r##"<line x1="{left}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{v:.2}</text>"##,
            width - right,
            left - 4.0,
            y + 3.0
        )
        .unwrap();
    }
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let clamped = if v.is_finite() { v.clamp(0.0, y_max) } else { 0.0 };
        let h = plot_h * clamped / y_max;
        let x = left + slot * i as f64 + 3.0;
        let y = top + plot_h - h;
        writeln!(
            s,
            r##"<rect class="bar" x="{x}" y="{y}" width="{}" height="{h}" fill="#4472c4"><title>{}: {v}</title></rect>"##,
            slot - 6.0,
            escape(label)
        )
        .unwrap();
        let lx = x + (slot - 6.0) / 2.0;
        let ly = top + plot_h + 8.0;
        writeln!(
            s,
            r#"<text x="{lx}" y="{ly}" transform="rotate(60 {lx} {ly})">{}</text>"#,
            escape(label)
        )
        .unwrap();
    }
    writeln!(
        s,
        r##"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="#333"/>"##,
        top + plot_h,
        width - right,
        top + plot_h
    )
    .unwrap();
    s.push_str("</svg>\n");
    Ok(s)
}

/// Metrics drawn for every table or sweep.
pub const CHART_METRICS: [&str; 4] = ["precision", "recall", "f1", "error"];

fn metric_value(m: &MetricReport, name: &str) -> f64 {
    match name {
        "precision" => m.precision,
        "recall" => m.recall,
        "f1" => m.f1,
        "error" => m.error,
        "fpr" => m.fpr,
        _ => unreachable!("unknown metric {name}"),
    }
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// `<stem>.csv` plus `<stem>_<metric>.svg` for each charted metric, one bar
/// per row. Returns the written paths.
pub fn write_table_report(rows: &[MetricRow], dir: &Path, stem: &str, title: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = vec![write(dir.join(format!("{stem}.csv")), &metric_table_csv(rows)?)?];
    let labels: Vec<String> = rows.iter().map(|r| r.name.clone()).collect();
    for metric in CHART_METRICS {
        let values: Vec<f64> = rows.iter().map(|r| metric_value(&r.metrics(), metric)).collect();
        let svg = bar_chart_svg(&format!("{title}: {metric}"), &labels, &values, 1.0)?;
        out.push(write(dir.join(format!("{stem}_{metric}.svg")), &svg)?);
    }
    Ok(out)
}

/// The per-combo sweep as a table and charts; bars are labeled
/// `<index>:<config>`.
pub fn write_sweep_report(rows: &[ComboRow], dir: &Path) -> Result<Vec<PathBuf>> {
    let table: Vec<MetricRow> = rows
        .iter()
        .map(|r| MetricRow::new(format!("{}:{}", r.combo_index, r.params), r.counts))
        .collect();
    write_table_report(&table, dir, "combo_sweep", "single combos")
}
