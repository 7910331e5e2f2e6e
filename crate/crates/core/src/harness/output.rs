use std::path::Path;

use serde::Serialize;

use crate::error::{CaviError, Result};
use crate::scheduler::Trajectory;

/// Fixed-width scientific notation used in every CSV column.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CaviError + '_ {
    move |source| CaviError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn trajectory_records(traj: &Trajectory) -> (Vec<String>, Vec<Vec<String>>) {
    let blocks = traj.rows.first().map_or(0, |r| r.d_half_blocks.len());
    let mut header = vec!["iter".to_string(), "d_half_total".to_string()];
    header.extend((0..blocks).map(|j| format!("d_half_block_{j}")));
    header.push("ratio".into());
    header.push("objective_gap".into());
    let rows = traj
        .rows
        .iter()
        .map(|r| {
            let mut rec = vec![r.iter.to_string(), format_float(r.d_half_total)];
            rec.extend(r.d_half_blocks.iter().map(|&d| format_float(d)));
            rec.push(opt(r.ratio));
            rec.push(opt(r.objective_gap));
            rec
        })
        .collect();
    (header, rows)
}

fn to_csv(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CaviError::Numerical(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

/// Trajectory as CSV text: `iter,d_half_total,d_half_block_0..,ratio,objective_gap`.
pub fn trajectory_csv_string(traj: &Trajectory) -> Result<String> {
    let (header, rows) = trajectory_records(traj);
    to_csv(&header, &rows)
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    std::fs::write(path, trajectory_csv_string(traj)?).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

pub(crate) fn csv_from_records(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    to_csv(header, rows)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}
