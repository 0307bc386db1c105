//! Trajectory CSV and JSON persistence. Floats are written with `Display`
//! (shortest round-trip form), so files re-parse to identical values.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::ExpError;

/// One row of `trajectory.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: usize,
    pub time: f64,
    pub eta_t: f64,
    pub ln_train: f64,
    pub ln_test: Option<f64>,
    pub psi: f64,
    pub cl: f64,
    pub norm_sq: Vec<f64>,
    pub bound_prefix: f64,
}

pub fn trajectory_header(layers: usize) -> Vec<String> {
    let mut h: Vec<String> =
        ["t", "time", "eta_t", "Ln_train", "Ln_test", "psi", "CL"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=layers).map(|l| format!("norm_sq_{l}")));
    h.push("bound_prefix".into());
    h
}

pub fn write_trajectory_csv(path: &Path, rows: &[TrajectoryRow]) -> Result<(), ExpError> {
    let layers = rows.first().map_or(0, |r| r.norm_sq.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| ExpError::csv(path, e))?;
    w.write_record(trajectory_header(layers)).map_err(|e| ExpError::csv(path, e))?;
    for r in rows {
        let mut rec = vec![
            r.t.to_string(),
            r.time.to_string(),
            r.eta_t.to_string(),
            r.ln_train.to_string(),
            r.ln_test.map(|v| v.to_string()).unwrap_or_default(),
            r.psi.to_string(),
            r.cl.to_string(),
        ];
        rec.extend(r.norm_sq.iter().map(|v| v.to_string()));
        rec.push(r.bound_prefix.to_string());
        w.write_record(&rec).map_err(|e| ExpError::csv(path, e))?;
    }
    w.flush().map_err(|e| ExpError::io(path, e))?;
    Ok(())
}

fn num(path: &Path, row: usize, field: &str, s: &str) -> Result<f64, ExpError> {
    s.parse::<f64>().map_err(|_| ExpError::Format(format!("{}: row {row}: bad {field} value {s:?}", path.display())))
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRow>, ExpError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| ExpError::csv(path, e))?;
    let header = r.headers().map_err(|e| ExpError::csv(path, e))?.clone();
    let cols = header.len();
    if cols < 9 || header.get(cols - 1) != Some("bound_prefix") || header.get(0) != Some("t") {
        return Err(ExpError::Format(format!("{}: not a trajectory CSV", path.display())));
    }
    let layers = cols - 8;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| ExpError::csv(path, e))?;
        let f = |j: usize| num(path, i, &header[j], &rec[j]);
        rows.push(TrajectoryRow {
            t: rec[0].parse().map_err(|_| ExpError::Format(format!("{}: row {i}: bad t", path.display())))?,
            time: f(1)?,
            eta_t: f(2)?,
            ln_train: f(3)?,
            ln_test: if rec[4].is_empty() { None } else { Some(f(4)?) },
            psi: f(5)?,
            cl: f(6)?,
            norm_sq: (7..7 + layers).map(f).collect::<Result<_, _>>()?,
            bound_prefix: f(cols - 1)?,
        });
    }
    Ok(rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExpError> {
    let mut s = serde_json::to_string_pretty(value).map_err(ExpError::Json)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| ExpError::io(path, e))
}

/// Writes a generic table; every cell already formatted.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), ExpError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| ExpError::csv(path, e))?;
    w.write_record(header).map_err(|e| ExpError::csv(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| ExpError::csv(path, e))?;
    }
    w.flush().map_err(|e| ExpError::io(path, e))
}

/// Reads a table written by [`write_table`] as header plus string cells.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), ExpError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| ExpError::csv(path, e))?;
    let header = r.headers().map_err(|e| ExpError::csv(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec.map_err(|e| ExpError::csv(path, e))?.iter().map(String::from).collect());
    }
    Ok((header, rows))
}
