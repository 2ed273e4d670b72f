//! Line-oriented step trace: a header record, one record per step, a summary.

use serde::{Deserialize, Serialize};

use crate::discretizer::Search;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceRecord {
    Header(TraceHeader),
    Step(StepRecord),
    Summary(TraceSummary),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub n: usize,
    pub k: u64,
    pub units_y: u64,
    pub initial: usize,
    /// The metric in its text format (exact entries preserved).
    pub metric: String,
    pub diameter: f64,
    pub require_k_ge_n2: bool,
    pub enumeration_cap: u64,
    pub search: Search,
    pub necessary: bool,
    pub tau: f64,
    pub y0: Vec<u64>,
    pub x0: Vec<u64>,
    pub potential: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub cost: Vec<f64>,
    /// `y(t)` in `units_y` units.
    pub y: Vec<u64>,
    /// `x(t)` in `k` units.
    pub x: Vec<u64>,
    /// Integral plan `x(t−1) → x(t)` as `(from, to, units)` triples.
    pub plan: Vec<(usize, usize, u64)>,
    pub potential: f64,
    pub movement: f64,
    pub target_movement: f64,
    pub descent_slack: f64,
    pub dominance: bool,
    pub necessary_slack: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub steps: usize,
    pub movement_x: f64,
    pub service_x: f64,
    pub movement_y: f64,
    pub service_y: f64,
    pub opt: f64,
    pub certificate_failures: usize,
}

/// A parsed trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
    pub summary: Option<TraceSummary>,
}

impl Trace {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut summary = None;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: TraceRecord =
                serde_json::from_str(line).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
            match record {
                TraceRecord::Header(h) if header.is_none() && steps.is_empty() => header = Some(h),
                TraceRecord::Step(s) if header.is_some() && summary.is_none() => {
                    if s.t != steps.len() + 1 {
                        return Err(Error::parse(origin, i + 1, format!("expected step {}, found {}", steps.len() + 1, s.t)));
                    }
                    steps.push(s)
                }
                TraceRecord::Summary(s) if header.is_some() && summary.is_none() => summary = Some(s),
                _ => return Err(Error::parse(origin, i + 1, "record out of order")),
            }
        }
        let header = header.ok_or_else(|| Error::parse(origin, 1, "missing header record"))?;
        Ok(Trace { header, steps, summary })
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }
}

pub(crate) fn write_record(out: &mut String, record: &TraceRecord) -> Result<()> {
    out.push_str(&serde_json::to_string(record)?);
    out.push('\n');
    Ok(())
}
