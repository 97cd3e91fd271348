use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use stablab::estimators::ReportEntry;

use crate::HarnessError;

/// One CSV line of a verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run_id: String,
    pub check: String,
    pub anchor: String,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub params: String,
    pub pass: bool,
}

impl ReportRow {
    pub fn from_entry(run_id: &str, e: &ReportEntry) -> Self {
        let mut params = e.params.clone();
        if let Some(t) = e.threshold {
            params.insert("threshold".into(), fmt_f64(t));
        }
        Self {
            run_id: run_id.to_string(),
            check: e.check.clone(),
            anchor: e.anchor.clone(),
            lhs: e.lhs,
            rhs: e.rhs,
            ratio: e.ratio,
            params: params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"),
            pass: e.pass,
        }
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Optional `# generated_unix=...` line, the header, then the records.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], timestamp: bool) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    if timestamp {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        writeln!(file, "# generated_unix={secs}").map_err(|e| HarnessError::io(path, e))?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// Reads a CSV written by [`write_csv`], skipping a leading timestamp line.
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let body = match text.strip_prefix('#') {
        Some(rest) => rest.split_once('\n').map(|(_, b)| b).unwrap_or(""),
        None => &text,
    };
    let mut r = csv::Reader::from_reader(body.as_bytes());
    Ok(r.deserialize().collect::<Result<Vec<T>, _>>()?)
}

/// Sorts by `(run_id, check)`; the order rows were produced in is irrelevant.
pub fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| (&a.run_id, &a.check).cmp(&(&b.run_id, &b.check)));
}
