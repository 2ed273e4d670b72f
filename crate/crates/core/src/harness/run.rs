use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::trace::{write_record, StepRecord, TraceHeader, TraceRecord, TraceSummary};
use crate::collective::{export_agents, realize_collective, CollectiveRun};
use crate::discretizer::{check_bounds, discretize, Discretization, DiscretizationBounds, CERTIFICATE_TOL};
use crate::error::{Error, Result};
use crate::metric::MetricSpace;
use crate::mts::{
    competitive_ratios, fixed_cost_accounting, fractional_cost, offline_opt, CostBreakdown, CostSequence,
    FractionalTrace, OfflineOptimum,
};

/// Everything a run computes, kept in memory.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: RunConfig,
    pub metric: MetricSpace,
    pub costs: CostSequence,
    pub y: FractionalTrace,
    pub discretization: Discretization,
    pub collective: CollectiveRun,
    pub opt: OfflineOptimum,
    pub check_necessary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub beta: f64,
    pub y: Option<f64>,
    pub y_adjusted: Option<f64>,
    pub x: Option<f64>,
    pub x_adjusted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedCostReport {
    pub tau: f64,
    pub variable: f64,
    pub fixed: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectiveCheck {
    pub movement_gap: f64,
    pub service_gap: f64,
    pub counts_match: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub steps: usize,
    pub dominance_failures: usize,
    pub descent_failures: usize,
    pub worst_descent_slack: Option<f64>,
    pub necessary_checked: bool,
    pub necessary_failures: usize,
    pub worst_necessary_slack: Option<f64>,
    pub bounds: DiscretizationBounds,
    pub collective: CollectiveCheck,
}

impl CertificateSummary {
    pub fn failures(&self) -> usize {
        self.dominance_failures
            + self.descent_failures
            + self.necessary_failures
            + usize::from(!self.bounds.passed())
            + usize::from(!self.collective.passed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n: usize,
    pub k: u64,
    pub steps: usize,
    pub units_y: u64,
    pub diameter: f64,
    pub initial_potential: f64,
    pub y: CostBreakdown,
    pub x: CostBreakdown,
    pub collective: CostBreakdown,
    pub opt: f64,
    pub ratios: Ratios,
    pub fixed_costs: FixedCostReport,
    pub certificates: CertificateSummary,
    pub passed: bool,
}

/// Finite values only; `±∞` (an empty comparison set) becomes `None`.
fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// metric → costs → y → discretize → collective → OPT.
pub fn run_pipeline(config: &RunConfig) -> Result<RunArtifacts> {
    let metric = config.metric_space()?;
    let costs = config.effective_costs(&metric)?;
    let y = config.target_trace(&metric, &costs)?;
    let check_necessary = config.necessary_for(costs.len());
    let discretization = discretize(&metric, &config.discretizer(), &y, check_necessary)?;
    let collective = realize_collective(&metric, &discretization.x, &costs)?;
    let opt = offline_opt(&metric, &costs, config.initial)?;
    Ok(RunArtifacts {
        config: config.clone(),
        metric,
        costs,
        y,
        discretization,
        collective,
        opt,
        check_necessary,
    })
}

/// Average agent cost against the fractional cost of `x`, and agent counts
/// against `k·x(t)` at every `t`.
pub fn collective_check(
    m: &MetricSpace,
    x: &FractionalTrace,
    frac: &CostBreakdown,
    run: &CollectiveRun,
) -> CollectiveCheck {
    let tol = CERTIFICATE_TOL * m.diameter() * x.len().max(1) as f64;
    let movement_gap = (run.average.movement - frac.movement).abs();
    let service_gap = (run.average.service - frac.service).abs();
    let counts_match = (0..=x.len()).all(|t| run.assignment_at(t).realizes(x.at(t)));
    CollectiveCheck {
        movement_gap,
        service_gap,
        counts_match,
        passed: counts_match && movement_gap <= tol && service_gap <= tol,
    }
}

impl RunArtifacts {
    pub fn report(&self) -> Result<RunReport> {
        let m = &self.metric;
        let n = m.len();
        let d = &self.discretization;
        let y_cost = fractional_cost(m, &self.y, &self.costs)?;
        let x_cost = fractional_cost(m, &d.x, &self.costs)?;
        let bounds = check_bounds(m, &self.y, &d.x, &self.costs, d.initial_potential)?;
        let collective = collective_check(m, &d.x, &x_cost, &self.collective);
        let certs = &d.certificates;
        let worst_descent = certs.iter().map(|c| c.descent_slack).fold(f64::INFINITY, f64::min);
        let worst_necessary = certs
            .iter()
            .filter_map(|c| c.necessary_slack)
            .fold(f64::INFINITY, f64::min);
        let certificates = CertificateSummary {
            steps: certs.len(),
            dominance_failures: certs.iter().filter(|c| !c.dominance_ok).count(),
            descent_failures: certs.iter().filter(|c| !c.descent_ok).count(),
            worst_descent_slack: finite(worst_descent),
            necessary_checked: self.check_necessary,
            necessary_failures: certs.iter().filter(|c| c.necessary_ok == Some(false)).count(),
            worst_necessary_slack: finite(worst_necessary),
            bounds,
            collective,
        };
        let beta = m.diameter();
        let opt = self.opt.value;
        let (ry, ry_adj) = competitive_ratios(y_cost.total, opt, beta);
        let (rx, rx_adj) = competitive_ratios(x_cost.total, opt, beta);
        let tau = self.config.tau_for(n);
        let fixed = fixed_cost_accounting(m, &d.x, tau)?;
        let passed = certificates.failures() == 0;
        Ok(RunReport {
            n,
            k: self.config.k,
            steps: self.costs.len(),
            units_y: self.y.units(),
            diameter: beta,
            initial_potential: d.initial_potential,
            y: y_cost,
            x: x_cost,
            collective: self.collective.average,
            opt,
            ratios: Ratios {
                beta,
                y: ry,
                y_adjusted: ry_adj,
                x: rx,
                x_adjusted: rx_adj,
            },
            fixed_costs: FixedCostReport {
                tau,
                variable: fixed.variable,
                fixed: fixed.fixed,
                total: fixed.variable + fixed.fixed,
            },
            certificates,
            passed,
        })
    }

    /// The step trace as JSON Lines.
    pub fn trace_text(&self, report: &RunReport) -> Result<String> {
        let m = &self.metric;
        let d = &self.discretization;
        let cfg = self.config.discretizer();
        let mut out = String::new();
        write_record(
            &mut out,
            &TraceRecord::Header(TraceHeader {
                n: m.len(),
                k: cfg.k,
                units_y: self.y.units(),
                initial: self.config.initial,
                metric: m.to_text(),
                diameter: m.diameter(),
                require_k_ge_n2: cfg.require_k_ge_n2,
                enumeration_cap: u64::try_from(cfg.enumeration_cap).unwrap_or(u64::MAX),
                search: cfg.search,
                necessary: self.check_necessary,
                tau: self.config.tau_for(m.len()),
                y0: self.y.initial().mass().to_vec(),
                x0: d.x.initial().mass().to_vec(),
                potential: d.initial_potential,
            }),
        )?;
        for (i, cert) in d.certificates.iter().enumerate() {
            let t = i + 1;
            write_record(
                &mut out,
                &TraceRecord::Step(StepRecord {
                    t,
                    cost: self.costs.at(t).values().to_vec(),
                    y: self.y.at(t).mass().to_vec(),
                    x: d.x.at(t).mass().to_vec(),
                    plan: self.collective.plans[i].triples(),
                    potential: cert.potential_after,
                    movement: cert.movement,
                    target_movement: cert.target_movement,
                    descent_slack: cert.descent_slack,
                    dominance: cert.dominance_ok,
                    necessary_slack: cert.necessary_slack.and_then(finite),
                }),
            )?;
        }
        write_record(
            &mut out,
            &TraceRecord::Summary(TraceSummary {
                steps: report.steps,
                movement_x: report.x.movement,
                service_x: report.x.service,
                movement_y: report.y.movement,
                service_y: report.y.service,
                opt: report.opt,
                certificate_failures: report.certificates.failures(),
            }),
        )?;
        Ok(out)
    }

    pub fn agents_text(&self) -> String {
        export_agents(&self.metric, &self.collective, &self.costs)
    }
}

/// A finished run: the report plus the rendered output files.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub report_json: String,
    pub trace: String,
    pub agents: String,
}

/// Runs `config` in memory.
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    let artifacts = run_pipeline(config)?;
    let report = artifacts.report()?;
    let trace = artifacts.trace_text(&report)?;
    let mut report_json = serde_json::to_string_pretty(&report)?;
    report_json.push('\n');
    Ok(RunOutcome {
        agents: artifacts.agents_text(),
        report,
        report_json,
        trace,
    })
}

/// Runs `config` and writes every output path it names.
pub fn run_and_write(config: &RunConfig) -> Result<RunOutcome> {
    let outcome = run(config)?;
    let out = &config.output;
    for (path, body) in [
        (&out.trace, &outcome.trace),
        (&out.report, &outcome.report_json),
        (&out.agents, &outcome.agents),
    ] {
        if let Some(path) = path {
            std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(outcome)
}
