//! Run orchestration and report emission.

mod commands;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use commands::{
    cmd_evaluate, cmd_generate, cmd_render, cmd_run, cmd_run_ablation, cmd_stats, AblationReport, AblationRow,
    CaseOutcome, GenerateReport, RunConfig, ABLATION_SCALE_SETS,
};

use crate::error::{Error, Result};
use crate::metrics::{AggregateSummary, Indicators, MetricParams, SeLoScores};
use crate::pipeline::PipelineConfig;
use crate::scorer::ScorerSpec;

pub const TOOL_NAME: &str = "selo";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A failure attached to one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseError {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for CaseError {
    fn from(e: &Error) -> Self {
        Self {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseReport {
    pub case_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scores: Option<SeLoScores>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<CaseError>,
}

/// The settings a report was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub manifest: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub maps_dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scorer: Option<ScorerSpec>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pipeline: Option<PipelineConfig>,
    pub params: MetricParams,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub generated_at: u64,
    pub config: ConfigEcho,
    /// Sorted by case id.
    pub cases: Vec<CaseReport>,
    /// Absent when no case succeeded.
    pub aggregate: Option<AggregateSummary>,
    pub failures: usize,
}

impl RunReport {
    pub(crate) fn assemble(config: ConfigEcho, mut cases: Vec<CaseReport>) -> Self {
        cases.sort_by(|a, b| a.case_id.cmp(&b.case_id));
        let ok: Vec<SeLoScores> = cases.iter().filter_map(|c| c.scores.clone()).collect();
        let failures = cases.iter().filter(|c| c.error.is_some()).count();
        Self {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            generated_at: unix_now(),
            config,
            cases,
            aggregate: crate::metrics::aggregate(&ok).ok(),
            failures,
        }
    }

    pub fn is_success(&self) -> bool {
        self.failures == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Per-case table with columns `Case, R_su, R_da, R_as, R_mi` and a final
    /// `mean` row. Failed cases show `NA`.
    pub fn to_csv(&self) -> String {
        let mut rows: Vec<(String, Option<Indicators>)> = self
            .cases
            .iter()
            .map(|c| (c.case_id.clone(), c.scores.as_ref().map(|s| s.indicators)))
            .collect();
        if let Some(a) = &self.aggregate {
            rows.push(("mean".to_string(), Some(a.mean)));
        }
        indicator_table("Case", rows.iter().map(|(name, i)| (name.as_str(), i.as_ref(), None)))
    }

    /// Writes `report.json` and `report.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let json = dir.join("report.json");
        std::fs::write(&json, self.to_json()).map_err(|e| Error::io(&json, e))?;
        let csv = dir.join("report.csv");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))
    }
}

/// Indicator table in the `R_su, R_da, R_as, R_mi` column order, with an
/// optional trailing seconds column.
pub(crate) fn indicator_table<'a>(
    first: &str,
    rows: impl Iterator<Item = (&'a str, Option<&'a Indicators>, Option<f64>)>,
) -> String {
    let mut rows = rows.peekable();
    let with_secs = rows.peek().is_some_and(|r| r.2.is_some());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![first, "R_su", "R_da", "R_as", "R_mi"];
    if with_secs {
        header.push("Total_s");
    }
    w.write_record(&header).expect("in-memory write");
    for (name, ind, secs) in rows {
        let mut rec = vec![name.to_string()];
        match ind {
            Some(i) => rec.extend([i.r_su, i.r_da, i.r_as, i.r_mi].map(|v| format!("{v:.6}"))),
            None => rec.extend(std::iter::repeat_n("NA".to_string(), 4)),
        }
        if let Some(s) = secs {
            rec.push(format!("{s:.3}"));
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8 fields")
}

pub(crate) fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Drops the fields that legitimately differ between two runs on the same
/// inputs (the generation timestamp and all wall-clock timings) and
/// re-serializes the rest.
pub fn strip_volatile(report_json: &str) -> Result<String> {
    fn strip(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Object(map) => {
                map.remove("generated_at");
                map.remove("timings");
                map.values_mut().for_each(strip);
            }
            serde_json::Value::Array(items) => items.iter_mut().for_each(strip),
            _ => {}
        }
    }
    let mut v: serde_json::Value = serde_json::from_str(report_json)?;
    strip(&mut v);
    Ok(serde_json::to_string_pretty(&v)?)
}

/// File stem used for a case's outputs; characters outside
/// `[A-Za-z0-9._-]` become `_`.
pub fn case_file_stem(case_id: &str) -> String {
    case_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}
