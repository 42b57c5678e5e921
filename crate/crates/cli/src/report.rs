//! Per-sample score CSV and the aggregated report in CSV and JSON.
//!
//! Records CSV columns: `sample_id,shape,method,iou,pixel_accuracy`. Any
//! producer (the baseline here, a learned model elsewhere) may append rows
//! with its own method tag.
//!
//! Report CSV columns: `method,shape,count,mean_iou,mean_pixel_accuracy`,
//! one `all` row per method followed by one row per shape family.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wisp_core::metrics::{aggregate_report, EvalRecord, ReportTable};

use crate::error::CliError;

pub const RECORD_COLUMNS: [&str; 5] = ["sample_id", "shape", "method", "iou", "pixel_accuracy"];
pub const REPORT_COLUMNS: [&str; 5] = [
    "method",
    "shape",
    "count",
    "mean_iou",
    "mean_pixel_accuracy",
];

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path.display().to_string(), io),
        other => CliError::Failed(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_records(path: &Path, records: &[EvalRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    if records.is_empty() {
        w.write_record(RECORD_COLUMNS)
            .map_err(|e| csv_error(path, e))?;
    }
    for r in records {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush()
        .map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Reads and validates a records CSV. The header must match
/// [`RECORD_COLUMNS`] exactly.
pub fn read_records(path: &Path) -> Result<Vec<EvalRecord>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(RECORD_COLUMNS) {
        return Err(CliError::Failed(format!(
            "{}: header {:?} must be {:?}",
            path.display(),
            header.iter().collect::<Vec<_>>(),
            RECORD_COLUMNS
        )));
    }
    let mut out = Vec::new();
    for (line, row) in r.deserialize::<EvalRecord>().enumerate() {
        let rec = row.map_err(|e| csv_error(path, e))?;
        rec.validate()
            .map_err(|e| CliError::Failed(format!("{} row {}: {e}", path.display(), line + 2)))?;
        out.push(rec);
    }
    Ok(out)
}

/// One row of the report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    /// A family name or `all`.
    pub shape: String,
    pub count: usize,
    pub mean_iou: f64,
    pub mean_pixel_accuracy: f64,
}

pub fn report_rows(table: &ReportTable) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for m in &table.methods {
        rows.push(ReportRow {
            method: m.method.clone(),
            shape: "all".into(),
            count: m.count,
            mean_iou: m.mean_iou,
            mean_pixel_accuracy: m.mean_pixel_accuracy,
        });
        for s in &m.shapes {
            rows.push(ReportRow {
                method: m.method.clone(),
                shape: s.shape.name().into(),
                count: s.count,
                mean_iou: s.mean_iou,
                mean_pixel_accuracy: s.mean_pixel_accuracy,
            });
        }
    }
    rows
}

pub fn build_report(records: &[EvalRecord]) -> Result<ReportTable, CliError> {
    aggregate_report(records).map_err(|e| CliError::Failed(format!("report: {e}")))
}

/// Writes `report.csv` and `report.json` into `dir`.
pub fn write_report(dir: &Path, table: &ReportTable) -> Result<(), CliError> {
    let csv_path = dir.join("report.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
    for row in report_rows(table) {
        w.serialize(row).map_err(|e| csv_error(&csv_path, e))?;
    }
    w.flush()
        .map_err(|e| CliError::io(csv_path.display().to_string(), e))?;
    let json_path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(table).expect("report serializes");
    text.push('\n');
    std::fs::write(&json_path, text).map_err(|e| CliError::io(json_path.display().to_string(), e))
}

pub fn read_report_json(path: &Path) -> Result<ReportTable, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

/// Fixed-width text rendering for the terminal.
pub fn render_table(table: &ReportTable) -> String {
    let mut s = format!(
        "{:<14} {:<9} {:>7} {:>9} {:>9}\n",
        "method", "shape", "count", "IoU", "pix.acc"
    );
    for r in report_rows(table) {
        s.push_str(&format!(
            "{:<14} {:<9} {:>7} {:>9.4} {:>9.4}\n",
            r.method, r.shape, r.count, r.mean_iou, r.mean_pixel_accuracy
        ));
    }
    s
}
