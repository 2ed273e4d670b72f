//! Grid runs over a config template with `{name}` placeholders.

use std::str::FromStr;

use rayon::prelude::*;

use super::config::{Outputs, RunConfig};
use super::run::run;
use crate::error::{Error, Result};

/// `name=v1,v2,...` or `name=a..b` (inclusive).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Axis {
    pub name: String,
    pub values: Vec<String>,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, desc) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("axis `{s}` is not of the form name=values")))?;
        let name = name.trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(Error::Config(format!("bad axis name in `{s}`")));
        }
        let values = if let Some((a, b)) = desc.split_once("..") {
            let parse = |v: &str| {
                v.trim()
                    .parse::<i64>()
                    .map_err(|_| Error::Config(format!("bad range bound `{v}` in `{s}`")))
            };
            let (a, b) = (parse(a)?, parse(b)?);
            if a > b {
                return Err(Error::Config(format!("empty range in `{s}`")));
            }
            (a..=b).map(|v| v.to_string()).collect()
        } else {
            desc.split(',').map(|v| v.trim().to_string()).collect::<Vec<_>>()
        };
        if values.iter().any(String::is_empty) {
            return Err(Error::Config(format!("empty value in `{s}`")));
        }
        Ok(Axis {
            name: name.to_string(),
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellStatus {
    Pass,
    Fail { failures: usize },
    Error(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub params: Vec<(String, String)>,
    pub status: CellStatus,
    pub x_total: Option<f64>,
    pub y_total: Option<f64>,
    pub opt: Option<f64>,
    pub ratio_adjusted: Option<f64>,
    pub initial_potential: Option<f64>,
}

/// Cartesian product of the axes, first axis varying slowest.
pub fn grid(axes: &[Axis]) -> Vec<Vec<(String, String)>> {
    let mut cells = vec![Vec::new()];
    for axis in axes {
        cells = cells
            .into_iter()
            .flat_map(|cell: Vec<(String, String)>| {
                axis.values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push((axis.name.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    cells
}

pub fn instantiate(template: &str, params: &[(String, String)]) -> String {
    params
        .iter()
        .fold(template.to_string(), |acc, (k, v)| acc.replace(&format!("{{{k}}}"), v))
}

fn run_cell(template: &str, params: Vec<(String, String)>) -> SweepRow {
    let result = RunConfig::parse(&instantiate(template, &params)).and_then(|mut cfg| {
        cfg.output = Outputs::default();
        run(&cfg)
    });
    match result {
        Ok(outcome) => {
            let r = outcome.report;
            let failures = r.certificates.failures();
            SweepRow {
                params,
                status: if failures == 0 { CellStatus::Pass } else { CellStatus::Fail { failures } },
                x_total: Some(r.x.total),
                y_total: Some(r.y.total),
                opt: Some(r.opt),
                ratio_adjusted: r.ratios.x_adjusted,
                initial_potential: Some(r.initial_potential),
            }
        }
        Err(e) => SweepRow {
            params,
            status: CellStatus::Error(e.to_string()),
            x_total: None,
            y_total: None,
            opt: None,
            ratio_adjusted: None,
            initial_potential: None,
        },
    }
}

/// Runs every cell in parallel; failing cells are recorded, not fatal.
pub fn sweep(template: &str, axes: &[Axis]) -> Vec<SweepRow> {
    grid(axes)
        .into_par_iter()
        .map(|params| run_cell(template, params))
        .collect()
}

pub fn to_csv(axes: &[Axis], rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = axes.iter().map(|a| a.name.as_str()).collect();
    header.extend([
        "status",
        "failures",
        "x_total",
        "y_total",
        "opt",
        "ratio_adjusted",
        "initial_potential",
        "error",
    ]);
    w.write_record(&header)?;
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    for row in rows {
        let mut rec: Vec<String> = row.params.iter().map(|(_, v)| v.clone()).collect();
        let (status, failures, error) = match &row.status {
            CellStatus::Pass => ("pass", "0".to_string(), String::new()),
            CellStatus::Fail { failures } => ("fail", failures.to_string(), String::new()),
            CellStatus::Error(e) => ("error", String::new(), e.clone()),
        };
        rec.push(status.into());
        rec.push(failures);
        rec.extend([
            opt(row.x_total),
            opt(row.y_total),
            opt(row.opt),
            opt(row.ratio_adjusted),
            opt(row.initial_potential),
        ]);
        rec.push(error);
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}
