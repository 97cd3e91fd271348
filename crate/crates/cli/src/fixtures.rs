//! Frozen regression ratios. Only `--bless` writes this file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::report::ReportRow;
use crate::HarnessError;

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixtures {
    pub version: u32,
    /// run id -> check -> reference ratio
    pub runs: BTreeMap<String, BTreeMap<String, f64>>,
}

impl Fixtures {
    /// A missing file is an empty fixture set.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        if !path.exists() {
            return Ok(Self {
                version: VERSION,
                ..Default::default()
            });
        }
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let f: Fixtures =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        if f.version != VERSION {
            return Err(HarnessError::Config(format!(
                "{}: fixtures version {} (expected {VERSION})",
                path.display(),
                f.version
            )));
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        let mut text = serde_json::to_string_pretty(self).expect("plain data");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
    }

    pub fn reference(&self, run_id: &str, check: &str) -> Option<f64> {
        self.runs.get(run_id)?.get(check).copied()
    }

    /// Replaces the references of every run present in `rows`.
    pub fn bless(&mut self, rows: &[ReportRow]) {
        for r in rows {
            if r.ratio.is_finite() {
                self.runs.entry(r.run_id.clone()).or_default().insert(r.check.clone(), r.ratio);
            }
        }
    }

    /// `ratio <= factor * reference` for rows with a positive reference.
    pub fn apply(&self, rows: &mut [ReportRow], factor: f64) {
        for r in rows.iter_mut() {
            let Some(reference) = self.reference(&r.run_id, &r.check) else {
                continue;
            };
            if reference <= 0.0 {
                continue;
            }
            let bound = factor * reference;
            let extra = format!("reference={};regression_bound={}", fmt(reference), fmt(bound));
            r.params = if r.params.is_empty() { extra } else { format!("{};{extra}", r.params) };
            if !(r.ratio <= bound) {
                r.pass = false;
            }
        }
    }
}

fn fmt(v: f64) -> String {
    crate::report::fmt_f64(v)
}
